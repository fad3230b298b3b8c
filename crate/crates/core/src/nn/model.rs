use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::block::{BlockGrads, ResidualBlock};
use super::spectral::{block_inverse, spectral_normalize, SpectralState};
use super::{IndexVector, NnError};
use crate::color::NormParams;
use crate::train::loss::{compute_loss, LossKind};

/// Parameter group names, in the order parameters are visited per block.
pub const PARAM_GROUPS: [&str; 7] = ["w1", "w2", "w3", "w4", "actnorm_scale", "actnorm_shift", "embedding"];

pub const DEFAULT_HIDDEN: [usize; 3] = [32, 64, 32];
pub const DEFAULT_LIPSCHITZ: f64 = 0.97;

/// Largest number of LUTs a single model may embed.
pub const MAX_LUTS: usize = 65_535;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Tiny,
    Small,
    Medium,
    Large,
    Custom,
}

impl SizeClass {
    /// Number of stacked residual blocks for the named sizes.
    pub fn blocks(self) -> Option<usize> {
        match self {
            Self::Tiny => Some(1),
            Self::Small => Some(2),
            Self::Medium => Some(3),
            Self::Large => Some(4),
            Self::Custom => None,
        }
    }

    pub fn all_named() -> [SizeClass; 4] {
        [Self::Tiny, Self::Small, Self::Medium, Self::Large]
    }
}

impl std::str::FromStr for SizeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Ok(Self::Tiny),
            "small" => Ok(Self::Small),
            "medium" => Ok(Self::Medium),
            "large" => Ok(Self::Large),
            "custom" => Ok(Self::Custom),
            _ => Err(format!("unknown model size `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub blocks: usize,
    pub hidden: [usize; 3],
    pub num_luts: usize,
    pub half_range: f64,
    pub invertible: bool,
    pub lipschitz_coeff: f64,
    /// Normalize every layer to `c` instead of sharing `c` across layers.
    pub strict_paper_sn: bool,
}

impl ModelConfig {
    pub fn for_size(size: SizeClass, num_luts: usize) -> Self {
        Self {
            blocks: size.blocks().unwrap_or(1),
            hidden: DEFAULT_HIDDEN,
            num_luts,
            half_range: NormParams::DEFAULT_HALF_RANGE,
            invertible: false,
            lipschitz_coeff: DEFAULT_LIPSCHITZ,
            strict_paper_sn: false,
        }
    }

    /// Contractive variant used for inversion: `blocks` residual blocks of
    /// width `[16, 32, 16]`.
    pub fn invertible(blocks: usize, num_luts: usize) -> Self {
        Self {
            blocks,
            hidden: [16, 32, 16],
            invertible: true,
            ..Self::for_size(SizeClass::Custom, num_luts)
        }
    }

    pub fn size_class(&self) -> SizeClass {
        if self.hidden != DEFAULT_HIDDEN || self.invertible {
            return SizeClass::Custom;
        }
        SizeClass::all_named()
            .into_iter()
            .find(|s| s.blocks() == Some(self.blocks))
            .unwrap_or(SizeClass::Custom)
    }

    pub fn norm(&self) -> NormParams {
        NormParams::new(self.half_range).expect("validated config")
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::BadConfig(m));
        if self.blocks == 0 {
            return bad("at least one residual block is required".into());
        }
        if self.hidden.contains(&0) {
            return bad(format!("hidden widths must be positive, got {:?}", self.hidden));
        }
        if !(1..=MAX_LUTS).contains(&self.num_luts) {
            return bad(format!("number of LUTs {} outside [1, {MAX_LUTS}]", self.num_luts));
        }
        if NormParams::new(self.half_range).is_err() {
            return bad(format!("half range {} outside (0, 1)", self.half_range));
        }
        if !(self.lipschitz_coeff > 0.0 && self.lipschitz_coeff < 1.0) {
            return Err(NnError::BadCoefficient(self.lipschitz_coeff));
        }
        Ok(())
    }

    pub fn core_weights_per_block(&self) -> usize {
        let [h1, h2, h3] = self.hidden;
        3 * h1 + h1 * h2 + h2 * h3 + h3 * 3
    }

    /// Trainable reals: core weights, actnorm and embeddings of all blocks.
    pub fn parameter_count(&self) -> usize {
        self.blocks * (self.core_weights_per_block() + 6 + self.num_luts * self.hidden[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LutNetModel {
    config: ModelConfig,
    blocks: Vec<ResidualBlock>,
    lut_names: Vec<String>,
}

/// Network output for a batch: quantized codes plus the pre-quantization
/// normalized values.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub codes: Vec<[u8; 3]>,
    pub normalized: Array2<f64>,
}

/// Gradients for every parameter, mirroring the model layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub blocks: Vec<BlockGrads>,
    pub embeddings: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct BackwardOutput {
    pub loss: f64,
    pub grads: ModelGrads,
}

impl ModelGrads {
    pub fn zeros_like(model: &LutNetModel) -> Self {
        Self {
            blocks: model.blocks.iter().map(BlockGrads::zeros_like).collect(),
            embeddings: model.blocks.iter().map(|b| Array2::zeros(b.embedding.dim())).collect(),
        }
    }

    /// Adds per-block gradients computed under index vector `o`, scattering
    /// the first-layer bias gradient into embedding rows.
    pub fn accumulate(&mut self, compact: &[BlockGrads], o: &IndexVector) {
        for ((dst, emb), src) in self.blocks.iter_mut().zip(&mut self.embeddings).zip(compact) {
            dst.add_assign(src);
            for (mut row, &w) in emb.rows_mut().into_iter().zip(o.weights()) {
                if w != 0.0 {
                    row.scaled_add(w, &src.bias);
                }
            }
        }
    }

    /// Gradient slices in the same order as [`LutNetModel::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.blocks.len() * PARAM_GROUPS.len());
        for (b, e) in self.blocks.iter().zip(&self.embeddings) {
            for w in &b.weights {
                out.push(w.as_slice().expect("standard layout"));
            }
            out.push(&b.scale[..]);
            out.push(&b.shift[..]);
            out.push(e.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn scale(&mut self, k: f64) {
        for (b, e) in self.blocks.iter_mut().zip(&mut self.embeddings) {
            for w in &mut b.weights {
                *w *= k;
            }
            b.bias *= k;
            b.scale.iter_mut().chain(&mut b.shift).for_each(|v| *v *= k);
            *e *= k;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Draws a fresh model: fan-in uniform weights scaled down by 100, unit
/// actnorm, zero embeddings. Deterministic in `seed`.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<LutNetModel, NnError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::with_capacity(config.blocks);
    for _ in 0..config.blocks {
        let mut block = ResidualBlock::zeros(config.hidden, config.num_luts);
        for layer in &mut block.layers {
            let bound = 1.0 / (layer.inputs() as f64).sqrt();
            layer
                .weight
                .mapv_inplace(|_| rng.gen_range(-bound..bound) / 100.0);
        }
        blocks.push(block);
    }
    let mut model = LutNetModel {
        config: config.clone(),
        blocks,
        lut_names: vec![String::new(); config.num_luts],
    };
    if config.invertible {
        let mut state = SpectralState::new(&model);
        model.enforce_contraction(&mut state, SpectralState::FINAL_ITERS)?;
    }
    model.round_to_f32();
    Ok(model)
}

impl LutNetModel {
    /// Assembles a model from parts, checking that every block agrees with
    /// the configuration.
    pub fn from_parts(
        config: ModelConfig,
        blocks: Vec<ResidualBlock>,
        lut_names: Vec<String>,
    ) -> Result<Self, NnError> {
        config.validate()?;
        if blocks.len() != config.blocks || lut_names.len() != config.num_luts {
            return Err(NnError::BadConfig("block or name count disagrees with config".into()));
        }
        for b in &blocks {
            if b.hidden() != config.hidden
                || b.num_luts() != config.num_luts
                || b.layers[0].inputs() != 3
                || b.layers[3].outputs() != 3
                || b.layers[1].inputs() != config.hidden[0]
                || b.layers[2].inputs() != config.hidden[1]
                || b.layers[3].inputs() != config.hidden[2]
            {
                return Err(NnError::BadConfig("block shapes disagree with config".into()));
            }
        }
        Ok(Self {
            config,
            blocks,
            lut_names,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[ResidualBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ResidualBlock] {
        &mut self.blocks
    }

    pub fn num_luts(&self) -> usize {
        self.config.num_luts
    }

    pub fn norm(&self) -> NormParams {
        self.config.norm()
    }

    pub fn is_invertible(&self) -> bool {
        self.config.invertible
    }

    pub fn lut_names(&self) -> &[String] {
        &self.lut_names
    }

    pub fn set_lut_names(&mut self, names: Vec<String>) -> Result<(), NnError> {
        if names.len() != self.num_luts() {
            return Err(NnError::IndexLengthMismatch {
                expected: self.num_luts(),
                found: names.len(),
            });
        }
        self.lut_names = names;
        Ok(())
    }

    pub fn one_hot(&self, index: usize) -> Result<IndexVector, NnError> {
        IndexVector::one_hot(self.num_luts(), index)
    }

    pub fn parameter_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Parameter slices: per block `W₁..W₄`, actnorm scale, shift, `E`.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.blocks.len() * PARAM_GROUPS.len());
        for b in &self.blocks {
            for l in &b.layers {
                out.push(l.weight.as_slice().expect("standard layout"));
            }
            out.push(&b.actnorm.scale[..]);
            out.push(&b.actnorm.shift[..]);
            out.push(b.embedding.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.blocks.len() * PARAM_GROUPS.len());
        for b in &mut self.blocks {
            for l in &mut b.layers {
                out.push(l.weight.as_slice_mut().expect("standard layout"));
            }
            out.push(&mut b.actnorm.scale[..]);
            out.push(&mut b.actnorm.shift[..]);
            out.push(b.embedding.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Rounds every parameter to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for s in self.param_slices_mut() {
            for v in s.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Spectrally normalizes every block with the model's coefficient.
    pub fn enforce_contraction(&mut self, state: &mut SpectralState, iters: usize) -> Result<(), NnError> {
        let c = self.config.lipschitz_coeff;
        let strict = self.config.strict_paper_sn;
        for (block, layer_state) in self.blocks.iter_mut().zip(state.blocks_mut()) {
            spectral_normalize(block, layer_state, c, iters, strict)?;
        }
        Ok(())
    }

    fn check_batch(&self, x: &Array2<f64>, o: &IndexVector) -> Result<(), NnError> {
        if x.ncols() != 3 {
            return Err(NnError::ShapeMismatch(format!("expected B×3 batch, got {:?}", x.dim())));
        }
        if x.nrows() == 0 {
            return Err(NnError::EmptyBatch);
        }
        if o.len() != self.num_luts() {
            return Err(NnError::IndexLengthMismatch {
                expected: self.num_luts(),
                found: o.len(),
            });
        }
        Ok(())
    }

    /// 8-bit codes to the normalized `[-a, a]` input space.
    pub fn normalize_codes(&self, codes: &[[u8; 3]]) -> Array2<f64> {
        let norm = self.norm();
        Array2::from_shape_fn((codes.len(), 3), |(i, c)| norm.normalize(codes[i][c] as f64))
    }

    pub fn normalize_unit(&self, colors: &[[f64; 3]]) -> Array2<f64> {
        let norm = self.norm();
        Array2::from_shape_fn((colors.len(), 3), |(i, c)| norm.normalize_unit(colors[i][c]))
    }

    /// Normalized input to normalized output: `tanh(T_D ∘ … ∘ T_1(atanh(x)))`.
    pub fn forward_normalized(&self, x: &Array2<f64>, o: &IndexVector) -> Result<Array2<f64>, NnError> {
        self.check_batch(x, o)?;
        let mut y = x.mapv(f64::atanh);
        for block in &self.blocks {
            let bias = block.first_bias(o)?;
            y += &block.forward_with_bias(&y, &bias);
        }
        y.mapv_inplace(f64::tanh);
        Ok(y)
    }

    /// Applies the network to 8-bit colors.
    pub fn forward_codes(&self, codes: &[[u8; 3]], o: &IndexVector) -> Result<ForwardOutput, NnError> {
        let normalized = self.forward_normalized(&self.normalize_codes(codes), o)?;
        Ok(ForwardOutput {
            codes: self.quantize(&normalized),
            normalized,
        })
    }

    /// Applies the network to continuous unit-cube colors, returning
    /// continuous outputs clipped to `[0, 1]`.
    pub fn forward_unit(&self, colors: &[[f64; 3]], o: &IndexVector) -> Result<Vec<[f64; 3]>, NnError> {
        let out = self.forward_normalized(&self.normalize_unit(colors), o)?;
        Ok(self.to_unit_clipped(&out))
    }

    pub fn quantize(&self, normalized: &Array2<f64>) -> Vec<[u8; 3]> {
        let norm = self.norm();
        normalized
            .rows()
            .into_iter()
            .map(|r| [norm.denormalize(r[0]), norm.denormalize(r[1]), norm.denormalize(r[2])])
            .collect()
    }

    pub fn to_unit_clipped(&self, normalized: &Array2<f64>) -> Vec<[f64; 3]> {
        let norm = self.norm();
        normalized
            .rows()
            .into_iter()
            .map(|r| [0, 1, 2].map(|c| norm.to_unit(r[c]).clamp(0.0, 1.0)))
            .collect()
    }

    /// Loss and gradients of every parameter, with embedding rows scattered.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        o: &IndexVector,
        target: &Array2<f64>,
        loss: LossKind,
    ) -> Result<BackwardOutput, NnError> {
        let (value, compact) = self.backward_compact(x, o, target, loss)?;
        let mut grads = ModelGrads::zeros_like(self);
        grads.accumulate(&compact, o);
        Ok(BackwardOutput { loss: value, grads })
    }

    /// Loss and per-block gradients, where the embedding gradient is left as
    /// the gradient of the first-layer bias.
    pub fn backward_compact(
        &self,
        x: &Array2<f64>,
        o: &IndexVector,
        target: &Array2<f64>,
        loss: LossKind,
    ) -> Result<(f64, Vec<BlockGrads>), NnError> {
        self.check_batch(x, o)?;
        if target.dim() != x.dim() {
            return Err(NnError::ShapeMismatch(format!(
                "target {:?} vs input {:?}",
                target.dim(),
                x.dim()
            )));
        }
        let mut y = x.mapv(f64::atanh);
        let mut traces = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let bias = block.first_bias(o)?;
            let (branch, trace) = block.forward_traced(&y, &bias);
            y += &branch;
            traces.push(trace);
        }
        let out = y.mapv(f64::tanh);
        let value = compute_loss(&out, target, loss, self.norm());

        let mut upstream = value.grad;
        Zip::from(&mut upstream).and(&out).for_each(|g, &t| *g *= 1.0 - t * t);
        let mut grads = Vec::with_capacity(self.blocks.len());
        for (block, trace) in self.blocks.iter().zip(&traces).rev() {
            let (g, dx) = block.backward(trace, &upstream);
            upstream += &dx;
            grads.push(g);
        }
        grads.reverse();
        Ok((value.loss, grads))
    }

    /// Loss only, for finite-difference checks and logging.
    pub fn loss(&self, x: &Array2<f64>, o: &IndexVector, target: &Array2<f64>, loss: LossKind) -> Result<f64, NnError> {
        let out = self.forward_normalized(x, o)?;
        if target.dim() != out.dim() {
            return Err(NnError::ShapeMismatch("target shape".into()));
        }
        Ok(compute_loss(&out, target, loss, self.norm()).loss)
    }

    /// Inverts the network in normalized space by running the blocks in
    /// reverse, each through fixed-point iteration.
    pub fn inverse_normalized(&self, x: &Array2<f64>, o: &IndexVector, iters: usize) -> Result<Array2<f64>, NnError> {
        if !self.config.invertible {
            return Err(NnError::NotInvertibleModel);
        }
        self.check_batch(x, o)?;
        let mut y = x.mapv(f64::atanh);
        for block in self.blocks.iter().rev() {
            y = block_inverse(block, &y, o, iters)?;
        }
        y.mapv_inplace(f64::tanh);
        Ok(y)
    }

    pub fn inverse_codes(&self, codes: &[[u8; 3]], o: &IndexVector, iters: usize) -> Result<ForwardOutput, NnError> {
        let normalized = self.inverse_normalized(&self.normalize_codes(codes), o, iters)?;
        Ok(ForwardOutput {
            codes: self.quantize(&normalized),
            normalized,
        })
    }

    pub fn inverse_unit(&self, colors: &[[f64; 3]], o: &IndexVector, iters: usize) -> Result<Vec<[f64; 3]>, NnError> {
        let out = self.inverse_normalized(&self.normalize_unit(colors), o, iters)?;
        Ok(self.to_unit_clipped(&out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::delta_e_srgb;
    use crate::lut::code_to_unit;

    fn random_codes(n: usize, seed: u64) -> Vec<[u8; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect()
    }

    fn zero_model(config: &ModelConfig) -> LutNetModel {
        let mut m = init_model(config, 0).unwrap();
        for s in m.param_slices_mut() {
            s.fill(0.0);
        }
        m
    }

    #[test]
    fn tiny_parameter_count() {
        let cfg = ModelConfig::for_size(SizeClass::Tiny, 512);
        assert_eq!(cfg.core_weights_per_block(), 4288);
        assert_eq!(cfg.parameter_count(), 20_678);
        assert_eq!(init_model(&cfg, 1).unwrap().parameter_count(), 20_678);
    }

    #[test]
    fn size_classes_round_trip() {
        for s in SizeClass::all_named() {
            assert_eq!(ModelConfig::for_size(s, 3).size_class(), s);
        }
        assert_eq!(ModelConfig::invertible(8, 1).size_class(), SizeClass::Custom);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::for_size(SizeClass::Tiny, 0);
        assert!(matches!(init_model(&cfg, 0), Err(NnError::BadConfig(_))));
        cfg.num_luts = 2;
        cfg.lipschitz_coeff = 1.0;
        assert_eq!(init_model(&cfg, 0), Err(NnError::BadCoefficient(1.0)));
        cfg.lipschitz_coeff = 0.97;
        cfg.hidden = [0, 4, 4];
        assert!(init_model(&cfg, 0).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = ModelConfig::for_size(SizeClass::Small, 4);
        let a = init_model(&cfg, 42).unwrap();
        let b = init_model(&cfg, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_model(&cfg, 43).unwrap());
        let bound = 1.0 / 3f64.sqrt() / 100.0;
        assert!(a.blocks()[0].layers[0].weight.iter().all(|w| w.abs() <= bound));
        assert!(a.blocks()[0].embedding.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn zero_model_is_identity_on_codes() {
        let m = zero_model(&ModelConfig::for_size(SizeClass::Medium, 3));
        let grays: Vec<[u8; 3]> = (0..=255u8).map(|g| [g, g, g]).collect();
        let o = m.one_hot(1).unwrap();
        assert_eq!(m.forward_codes(&grays, &o).unwrap().codes, grays);
        let codes = random_codes(2000, 5);
        assert_eq!(m.forward_codes(&codes, &o).unwrap().codes, codes);
    }

    #[test]
    fn fresh_model_is_near_identity() {
        let m = init_model(&ModelConfig::for_size(SizeClass::Large, 2), 9).unwrap();
        let codes = random_codes(10_000, 1);
        let out = m.forward_unit(&codes.iter().map(|c| code_to_unit(*c)).collect::<Vec<_>>(), &m.one_hot(0).unwrap())
            .unwrap();
        let mean = codes
            .iter()
            .zip(&out)
            .map(|(c, o)| delta_e_srgb(code_to_unit(*c), *o))
            .sum::<f64>()
            / codes.len() as f64;
        assert!(mean <= 1.0, "{mean}");
    }

    #[test]
    fn fresh_block_residual_is_small() {
        let m = init_model(&ModelConfig::for_size(SizeClass::Tiny, 2), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((1000, 3), |_| rng.gen_range(-1.2..1.2));
        let r = m.blocks()[0].forward(&x, &m.one_hot(1).unwrap()).unwrap();
        assert!(r.iter().all(|v| v.abs() <= 0.05));
    }

    #[test]
    fn one_hot_and_row_selection_agree() {
        let mut m = init_model(&ModelConfig::for_size(SizeClass::Small, 3), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for b in m.blocks_mut() {
            b.embedding.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        }
        let x = m.normalize_codes(&random_codes(64, 3));
        let via_o = m.forward_normalized(&x, &m.one_hot(2).unwrap()).unwrap();
        let mut y = x.mapv(f64::atanh);
        for b in m.blocks() {
            y += &b.forward_with_bias(&y, &b.embedding.row(2).to_owned());
        }
        assert_eq!(via_o, y.mapv(f64::tanh));
    }

    #[test]
    fn forward_errors() {
        let m = init_model(&ModelConfig::for_size(SizeClass::Tiny, 2), 0).unwrap();
        let o = IndexVector::one_hot(3, 0).unwrap();
        assert!(matches!(
            m.forward_codes(&[[1, 2, 3]], &o),
            Err(NnError::IndexLengthMismatch { expected: 2, found: 3 })
        ));
        assert_eq!(m.forward_codes(&[], &m.one_hot(0).unwrap()), Err(NnError::EmptyBatch));
        assert!(matches!(
            m.forward_normalized(&Array2::zeros((2, 4)), &m.one_hot(0).unwrap()),
            Err(NnError::ShapeMismatch(_))
        ));
        assert_eq!(m.inverse_codes(&[[0, 0, 0]], &m.one_hot(0).unwrap(), 5), Err(NnError::NotInvertibleModel));
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let m = init_model(&ModelConfig::for_size(SizeClass::Small, 3), 6).unwrap();
        let x = m.normalize_codes(&random_codes(16, 2));
        let o = m.one_hot(1).unwrap();
        let target = m.forward_normalized(&x, &o).unwrap();
        for kind in [LossKind::L2, LossKind::DeltaE] {
            let b = m.backward(&x, &o, &target, kind).unwrap();
            assert_eq!(b.loss, 0.0);
            assert_eq!(b.grads.max_abs(), 0.0);
        }
    }

    #[test]
    fn untouched_embedding_rows_get_no_gradient() {
        let m = init_model(&ModelConfig::for_size(SizeClass::Small, 5), 6).unwrap();
        let x = m.normalize_codes(&random_codes(16, 2));
        let o = m.one_hot(3).unwrap();
        let target = Array2::from_elem((16, 3), 0.2);
        let b = m.backward(&x, &o, &target, LossKind::L2).unwrap();
        for e in &b.grads.embeddings {
            for (k, row) in e.rows().into_iter().enumerate() {
                if k == 3 {
                    assert!(row.iter().any(|v| *v != 0.0));
                } else {
                    assert!(row.iter().all(|v| *v == 0.0));
                }
            }
        }
    }

    #[test]
    fn invertible_identity_model_inverts_to_identity() {
        let mut m = zero_model(&ModelConfig::invertible(4, 2));
        for b in m.blocks_mut() {
            b.actnorm.scale = [1.0; 3];
        }
        let grays: Vec<[u8; 3]> = (0..=255u8).map(|g| [g, g, g]).collect();
        let out = m.inverse_codes(&grays, &m.one_hot(0).unwrap(), 10).unwrap();
        assert_eq!(out.codes, grays);
    }
}
