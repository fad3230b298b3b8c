//! Reconstruction of embedded LUTs and fidelity reports.
//!
//! ΔE is measured on continuous model outputs (clipped to the unit cube),
//! PSNR on 8-bit quantized outputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::CompressionReport;
use crate::color::{delta_e_srgb, delta_e_stats, psnr, quantize_unit, ColorError, PSNR_CAP_DB};
use crate::image::RgbImage;
use crate::lut::{code_to_unit, lattice_points, HaldSpec, Lut3D, LutError, MAX_SIZE, MIN_SIZE};
use crate::nn::{IndexVector, LutNetModel, ModelConfig, NnError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Quantile reported next to the mean ΔE.
pub const DELTA_E_QUANTILE: f64 = 0.9;
pub const DEFAULT_HALD_LEVEL: usize = 6;
pub const FULL_HALD_LEVEL: usize = 16;
const CHUNK: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no images to evaluate")]
    EmptyInput,
    #[error("{luts} LUTs supplied for a model embedding {model}")]
    LutCountMismatch { luts: usize, model: usize },
    #[error("resolution {0} outside [{MIN_SIZE}, {MAX_SIZE}]")]
    BadResolution(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Lut(#[from] LutError),
    #[error(transparent)]
    Color(#[from] ColorError),
}

/// Runs `f` over fixed-size chunks in parallel and concatenates in order.
fn chunked<T, U, F>(items: &[T], f: F) -> Result<Vec<U>, EvalError>
where
    T: Sync,
    U: Send,
    F: Fn(&[T]) -> Result<Vec<U>, EvalError> + Sync,
{
    let parts: Vec<Vec<U>> = items.par_chunks(CHUNK).map(&f).collect::<Result<_, _>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Continuous and quantized model outputs for 8-bit inputs.
fn predict_codes(model: &LutNetModel, codes: &[[u8; 3]], o: &IndexVector) -> Result<Vec<([f64; 3], [u8; 3])>, EvalError> {
    chunked(codes, |chunk| {
        let out = model.forward_codes(chunk, o)?;
        let unit = model.to_unit_clipped(&out.normalized);
        Ok(unit.into_iter().zip(out.codes).collect())
    })
}

fn check_resolution(n: usize) -> Result<(), EvalError> {
    if (MIN_SIZE..=MAX_SIZE).contains(&n) {
        Ok(())
    } else {
        Err(EvalError::BadResolution(n))
    }
}

fn lattice_lut(n: usize, f: impl Fn(&[[f64; 3]]) -> Result<Vec<[f64; 3]>, EvalError> + Sync) -> Result<Lut3D, EvalError> {
    check_resolution(n)?;
    let inputs: Vec<[f64; 3]> = lattice_points(n).collect();
    Ok(Lut3D::new(n, chunked(&inputs, f)?)?)
}

/// Evaluates the network on an `n³` lattice under an index vector.
pub fn blend_reconstruct(model: &LutNetModel, weights: &IndexVector, n: usize) -> Result<Lut3D, EvalError> {
    if weights.len() != model.num_luts() {
        return Err(NnError::IndexLengthMismatch {
            expected: model.num_luts(),
            found: weights.len(),
        }
        .into());
    }
    lattice_lut(n, |chunk| Ok(model.forward_unit(chunk, weights)?))
}

/// Extracts embedded LUT `index` at resolution `n`.
pub fn reconstruct_lut(model: &LutNetModel, index: usize, n: usize) -> Result<Lut3D, EvalError> {
    let o = model.one_hot(index)?;
    let lut = blend_reconstruct(model, &o, n)?;
    Ok(match model.lut_names().get(index).filter(|s| !s.is_empty()) {
        Some(name) => lut.with_title(name.clone()),
        None => lut,
    })
}

/// Inverse of embedded LUT `index` sampled on an `n³` lattice.
pub fn invert_lut(model: &LutNetModel, index: usize, n: usize, iters: usize) -> Result<Lut3D, EvalError> {
    if !model.is_invertible() {
        return Err(NnError::NotInvertibleModel.into());
    }
    let o = model.one_hot(index)?;
    lattice_lut(n, |chunk| Ok(model.inverse_unit(chunk, &o, iters)?))
}

/// Fidelity of one embedded LUT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LutMetrics {
    pub delta_e_mean: f64,
    pub delta_e_q90: f64,
    pub psnr: f64,
}

impl LutMetrics {
    fn mean(items: &[LutMetrics]) -> LutMetrics {
        let n = items.len() as f64;
        LutMetrics {
            delta_e_mean: items.iter().map(|m| m.delta_e_mean).sum::<f64>() / n,
            delta_e_q90: items.iter().map(|m| m.delta_e_q90).sum::<f64>() / n,
            psnr: items.iter().map(|m| m.psnr).sum::<f64>() / n,
        }
    }
}

/// Compares a LUT against the network on a set of 8-bit inputs.
pub fn evaluate_codes(model: &LutNetModel, lut: &Lut3D, index: usize, codes: &[[u8; 3]]) -> Result<LutMetrics, EvalError> {
    let o = model.one_hot(index)?;
    let predicted = predict_codes(model, codes, &o)?;
    let truth = chunked(codes, |chunk| {
        let unit: Vec<[f64; 3]> = chunk.iter().map(|c| code_to_unit(*c)).collect();
        Ok(lut.apply_trilinear(&unit)?)
    })?;
    let errors: Vec<f64> = truth
        .iter()
        .zip(&predicted)
        .map(|(t, (p, _))| delta_e_srgb(*t, *p))
        .collect();
    let stats = delta_e_stats(&errors, DELTA_E_QUANTILE)?;
    let truth_q: Vec<u8> = truth.iter().flat_map(|t| t.map(quantize_unit)).collect();
    let pred_q: Vec<u8> = predicted.iter().flat_map(|(_, q)| *q).collect();
    Ok(LutMetrics {
        delta_e_mean: stats.mean,
        delta_e_q90: stats.quantile,
        psnr: psnr(&truth_q, &pred_q)?,
    })
}

/// Metrics over every input color of a level-`ℓ` Hald image.
pub fn evaluate_hald(model: &LutNetModel, lut: &Lut3D, index: usize, level: usize) -> Result<LutMetrics, EvalError> {
    let spec = HaldSpec::new(level)?;
    evaluate_codes(model, lut, index, &spec.input_codes())
}

/// Metrics per image, averaged over images.
pub fn evaluate_images(model: &LutNetModel, lut: &Lut3D, index: usize, images: &[RgbImage]) -> Result<LutMetrics, EvalError> {
    if images.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let per_image = images
        .iter()
        .map(|img| evaluate_codes(model, lut, index, &img.pixels().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LutMetrics::mean(&per_image))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvalDomain {
    Hald { level: usize, colors: usize },
    Images { id: String, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutEntry {
    pub index: usize,
    pub name: String,
    #[serde(flatten)]
    pub metrics: LutMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub domain: EvalDomain,
    pub model: ModelConfig,
    pub parameter_count: usize,
    pub delta_e_on: String,
    pub psnr_on: String,
    pub psnr_cap_db: f64,
    pub luts: Vec<LutEntry>,
    /// Means of the per-LUT values.
    pub average: LutMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compression: Option<CompressionReport>,
}

impl EvalReport {
    fn assemble(model: &LutNetModel, domain: EvalDomain, metrics: Vec<LutMetrics>) -> Self {
        let average = LutMetrics::mean(&metrics);
        let luts = metrics
            .into_iter()
            .enumerate()
            .map(|(index, metrics)| LutEntry {
                index,
                name: model.lut_names().get(index).cloned().unwrap_or_default(),
                metrics,
            })
            .collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            domain,
            model: model.config().clone(),
            parameter_count: model.parameter_count(),
            delta_e_on: "continuous outputs clipped to [0,1]".into(),
            psnr_on: "8-bit quantized outputs".into(),
            psnr_cap_db: PSNR_CAP_DB,
            luts,
            average,
            compression: None,
        }
    }

    pub fn with_compression(mut self, compression: CompressionReport) -> Self {
        self.compression = Some(compression);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        match &self.domain {
            EvalDomain::Hald { level, colors } => {
                out.push_str(&format!("domain: hald level {level} ({colors} colors)\n"))
            }
            EvalDomain::Images { id, count } => out.push_str(&format!("domain: {count} images ({id})\n")),
        }
        let c = &self.model;
        out.push_str(&format!(
            "model: D={} hidden={:?} N={} params={}{}\n",
            c.blocks,
            c.hidden,
            c.num_luts,
            self.parameter_count,
            if c.invertible { " invertible" } else { "" }
        ));
        out.push_str(&format!("{:>5}  {:<24} {:>9} {:>9} {:>9}\n", "index", "name", "dE_M", "dE_90", "PSNR"));
        let row = |out: &mut String, idx: &str, name: &str, m: &LutMetrics| {
            out.push_str(&format!(
                "{idx:>5}  {name:<24} {:>9.4} {:>9.4} {:>9.3}\n",
                m.delta_e_mean, m.delta_e_q90, m.psnr
            ));
        };
        for e in &self.luts {
            row(&mut out, &e.index.to_string(), &e.name, &e.metrics);
        }
        row(&mut out, "mean", "", &self.average);
        if let Some(r) = &self.compression {
            out.push_str(&format!(
                "checkpoint {} B ({} B deflated), LUTs {} B, ratio {:.3}% ({:.3}% deflated)\n",
                r.checkpoint_bytes, r.compressed_checkpoint_bytes, r.lut_bytes, r.ratio_percent, r.compressed_ratio_percent
            ));
        }
        out
    }
}

fn check_count(model: &LutNetModel, luts: &[Lut3D]) -> Result<(), EvalError> {
    if luts.len() != model.num_luts() {
        return Err(EvalError::LutCountMismatch {
            luts: luts.len(),
            model: model.num_luts(),
        });
    }
    Ok(())
}

/// Evaluates every embedded LUT on a Hald lattice.
pub fn evaluate_model_hald(model: &LutNetModel, luts: &[Lut3D], level: usize) -> Result<EvalReport, EvalError> {
    check_count(model, luts)?;
    let spec = HaldSpec::new(level)?;
    let codes = spec.input_codes();
    let metrics = luts
        .iter()
        .enumerate()
        .map(|(i, lut)| evaluate_codes(model, lut, i, &codes))
        .collect::<Result<Vec<_>, _>>()?;
    let domain = EvalDomain::Hald {
        level,
        colors: codes.len(),
    };
    Ok(EvalReport::assemble(model, domain, metrics))
}

/// Evaluates every embedded LUT on an image set.
pub fn evaluate_model_images(
    model: &LutNetModel,
    luts: &[Lut3D],
    images: &[RgbImage],
    id: &str,
) -> Result<EvalReport, EvalError> {
    check_count(model, luts)?;
    let metrics = luts
        .iter()
        .enumerate()
        .map(|(i, lut)| evaluate_images(model, lut, i, images))
        .collect::<Result<Vec<_>, _>>()?;
    let domain = EvalDomain::Images {
        id: id.to_string(),
        count: images.len(),
    };
    Ok(EvalReport::assemble(model, domain, metrics))
}

/// Outcome of the blend plausibility heuristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendCheck {
    pub points: usize,
    pub outside: usize,
    pub outside_fraction: f64,
}

/// Counts lattice points where the 50/50 blend of LUTs `a` and `b` leaves
/// the per-channel box spanned by their one-hot outputs, widened by
/// `margin` (unit-cube units) on each side.
pub fn blend_box_check(model: &LutNetModel, a: usize, b: usize, n: usize, margin: f64) -> Result<BlendCheck, EvalError> {
    let mut w = vec![0.0; model.num_luts()];
    w[a] += 0.5;
    w[b] += 0.5;
    let blend = blend_reconstruct(model, &IndexVector::from_weights(w)?, n)?;
    let la = reconstruct_lut(model, a, n)?;
    let lb = reconstruct_lut(model, b, n)?;
    let outside = blend
        .table()
        .iter()
        .zip(la.table().iter().zip(lb.table()))
        .filter(|(m, (x, y))| (0..3).any(|c| m[c] < x[c].min(y[c]) - margin || m[c] > x[c].max(y[c]) + margin))
        .count();
    let points = blend.table().len();
    Ok(BlendCheck {
        points,
        outside,
        outside_fraction: outside as f64 / points as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lut::{make_synthetic_lut, SyntheticKind};
    use crate::nn::{init_model, SizeClass};

    fn zero_model(n: usize) -> LutNetModel {
        let mut m = init_model(&ModelConfig::for_size(SizeClass::Tiny, n), 0).unwrap();
        for s in m.param_slices_mut() {
            s.fill(0.0);
        }
        m
    }

    #[test]
    fn zero_model_reconstructs_identity() {
        let m = zero_model(2);
        let lut = reconstruct_lut(&m, 1, 33).unwrap();
        for (p, v) in lattice_points(33).zip(lut.table()) {
            assert_eq!(p.map(quantize_unit), v.map(quantize_unit));
        }
    }

    #[test]
    fn resolutions_agree_on_shared_points() {
        let m = init_model(&ModelConfig::for_size(SizeClass::Small, 2), 5).unwrap();
        let coarse = reconstruct_lut(&m, 0, 3).unwrap();
        let fine = reconstruct_lut(&m, 0, 5).unwrap();
        for r in 0..3 {
            for g in 0..3 {
                for b in 0..3 {
                    assert_eq!(coarse.entry(r, g, b), fine.entry(2 * r, 2 * g, 2 * b));
                }
            }
        }
    }

    #[test]
    fn reconstruction_matches_forward_at_lattice_points() {
        let m = init_model(&ModelConfig::for_size(SizeClass::Tiny, 3), 8).unwrap();
        let lut = reconstruct_lut(&m, 2, 9).unwrap();
        let points: Vec<[f64; 3]> = lattice_points(9).collect();
        let direct = m.forward_unit(&points, &m.one_hot(2).unwrap()).unwrap();
        assert_eq!(lut.apply_trilinear(&points).unwrap(), direct);
    }

    #[test]
    fn one_hot_blend_equals_reconstruction() {
        let m = init_model(&ModelConfig::for_size(SizeClass::Tiny, 3), 2).unwrap();
        let o = IndexVector::from_weights(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(
            blend_reconstruct(&m, &o, 7).unwrap().table(),
            reconstruct_lut(&m, 1, 7).unwrap().table()
        );
        assert!(matches!(
            blend_reconstruct(&m, &IndexVector::from_weights(vec![1.0]).unwrap(), 7),
            Err(EvalError::Nn(NnError::IndexLengthMismatch { .. }))
        ));
        assert!(matches!(reconstruct_lut(&m, 3, 7), Err(EvalError::Nn(NnError::IndexOutOfRange { .. }))));
        assert!(matches!(reconstruct_lut(&m, 0, 1), Err(EvalError::BadResolution(1))));
    }

    #[test]
    fn identity_against_zero_model_is_perfect() {
        let m = zero_model(1);
        let id = Lut3D::identity(17).unwrap();
        let h = evaluate_hald(&m, &id, 0, 3).unwrap();
        assert!(h.delta_e_mean < 1e-9 && h.delta_e_q90 < 1e-9);
        assert_eq!(h.psnr, PSNR_CAP_DB);
        let img = RgbImage::from_pixels(2, 1, &[[3, 200, 90], [255, 0, 17]]).unwrap();
        let i = evaluate_images(&m, &id, 0, &[img]).unwrap();
        assert!(i.delta_e_mean < 1e-9);
        assert_eq!(i.psnr, PSNR_CAP_DB);
        assert!(matches!(evaluate_images(&m, &id, 0, &[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn single_pixel_image_equals_single_color() {
        let m = init_model(&ModelConfig::for_size(SizeClass::Tiny, 1), 3).unwrap();
        let lut = make_synthetic_lut(&SyntheticKind::Gamma(2.2), 9).unwrap();
        let c = [40u8, 120, 230];
        let img = RgbImage::from_pixels(1, 1, &[c]).unwrap();
        let from_image = evaluate_images(&m, &lut, 0, &[img]).unwrap();
        let from_codes = evaluate_codes(&m, &lut, 0, &[c]).unwrap();
        assert_eq!(from_image, from_codes);
        let truth = lut.sample(code_to_unit(c)).unwrap();
        let pred = m.forward_unit(&[code_to_unit(c)], &m.one_hot(0).unwrap()).unwrap()[0];
        assert!((from_codes.delta_e_mean - delta_e_srgb(truth, pred)).abs() < 1e-12);
    }

    #[test]
    fn report_averages_and_quantile_order() {
        let luts: Vec<Lut3D> = [SyntheticKind::Gamma(0.6), SyntheticKind::Grayscale, SyntheticKind::Identity]
            .iter()
            .map(|k| make_synthetic_lut(k, 9).unwrap())
            .collect();
        let mut m = init_model(&ModelConfig::for_size(SizeClass::Tiny, 3), 1).unwrap();
        m.set_lut_names(luts.iter().map(|l| l.title().unwrap().to_string()).collect())
            .unwrap();
        let r = evaluate_model_hald(&m, &luts, 3).unwrap();
        assert_eq!(r.domain, EvalDomain::Hald { level: 3, colors: 729 });
        let mean: f64 = r.luts.iter().map(|e| e.metrics.delta_e_mean).sum::<f64>() / 3.0;
        assert!((r.average.delta_e_mean - mean).abs() <= 1e-12);
        for e in &r.luts {
            assert!(e.metrics.delta_e_q90 >= 0.0 && e.metrics.delta_e_mean >= 0.0);
            let median = {
                let o = m.one_hot(e.index).unwrap();
                let codes = HaldSpec::new(3).unwrap().input_codes();
                let unit: Vec<[f64; 3]> = codes.iter().map(|c| code_to_unit(*c)).collect();
                let pred = m.forward_unit(&unit, &o).unwrap();
                let truth = luts[e.index].apply_trilinear(&unit).unwrap();
                let errs: Vec<f64> = truth.iter().zip(&pred).map(|(t, p)| delta_e_srgb(*t, *p)).collect();
                delta_e_stats(&errs, 0.5).unwrap().quantile
            };
            assert!(e.metrics.delta_e_q90 >= median);
        }
        let json = r.to_json();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.to_table().contains("grayscale"));
        assert!(matches!(
            evaluate_model_hald(&m, &luts[..2], 3),
            Err(EvalError::LutCountMismatch { .. })
        ));
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let kinds = [SyntheticKind::Gamma(0.6), SyntheticKind::SigmoidContrast(5.0)];
        let luts: Vec<Lut3D> = kinds.iter().map(|k| make_synthetic_lut(k, 5).unwrap()).collect();
        let m = init_model(&ModelConfig::for_size(SizeClass::Tiny, 2), 1).unwrap();
        let a = evaluate_hald(&m, &luts[0], 0, 3).unwrap();
        let b = evaluate_hald(&m, &luts[1], 1, 3).unwrap();
        // swapping the embedding rows together with the LUT order
        let mut swapped = m.clone();
        for block in swapped.blocks_mut() {
            let r0 = block.embedding.row(0).to_owned();
            let r1 = block.embedding.row(1).to_owned();
            block.embedding.row_mut(0).assign(&r1);
            block.embedding.row_mut(1).assign(&r0);
        }
        assert_eq!(evaluate_hald(&swapped, &luts[0], 1, 3).unwrap(), a);
        assert_eq!(evaluate_hald(&swapped, &luts[1], 0, 3).unwrap(), b);
    }

    #[test]
    fn inversion_requires_invertible_model() {
        let m = zero_model(1);
        assert!(matches!(invert_lut(&m, 0, 5, 10), Err(EvalError::Nn(NnError::NotInvertibleModel))));
        let inv = init_model(&ModelConfig::invertible(2, 1), 0).unwrap();
        let mut zeroed = inv.clone();
        for s in zeroed.param_slices_mut() {
            s.fill(0.0);
        }
        let lut = invert_lut(&zeroed, 0, 9, 5).unwrap();
        for (p, v) in lattice_points(9).zip(lut.table()) {
            assert_eq!(p.map(quantize_unit), v.map(quantize_unit));
        }
    }

    #[test]
    fn blend_check_counts_points() {
        let m = init_model(&ModelConfig::for_size(SizeClass::Tiny, 2), 1).unwrap();
        let c = blend_box_check(&m, 0, 1, 5, 1e-3).unwrap();
        assert_eq!(c.points, 125);
        assert!(c.outside <= c.points);
    }
}
