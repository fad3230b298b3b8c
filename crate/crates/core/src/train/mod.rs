//! Sampling-based fitting of many LUTs into one model.
//!
//! Every iteration draws a batch of 8-bit colors from the training
//! distribution, looks up each targeted LUT on it, and takes one Adam step
//! on the summed per-LUT losses.

mod adam;
pub mod loss;
mod sampling;

use std::time::Instant;

use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use loss::{compute_loss, LossKind, LossValue};
pub use sampling::{
    build_empirical_distribution, build_empirical_distribution_capped, sample_colors, stream_rng, ColorDistribution,
    EmpiricalPool, POOL_CAP,
};

use crate::color::delta_e_srgb;
use crate::lut::{code_to_unit, Lut3D, LutError};
use crate::nn::{init_model, BlockGrads, LutNetModel, ModelConfig, ModelGrads, NnError, SpectralState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empirical color pool is empty")]
    EmptyPool,
    #[error("no input images or pixels")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at iteration {iter}: {loss}")]
    NonFiniteLoss { iter: usize, loss: f64 },
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("invalid color pool: {0}")]
    BadPool(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Lut(#[from] LutError),
}

/// Which LUTs contribute to the loss at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LutSubset {
    All,
    /// A fresh random subset of this many LUTs per step.
    Random(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full published schedule.
    Paper,
    /// Four times fewer iterations with the same learning-rate decay shape.
    Desk,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            _ => Err(format!("unknown preset `{s}` (expected paper or desk)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_iters: usize,
    pub lr: f64,
    pub lr_halve_every: usize,
    pub loss: LossKind,
    pub seed: u64,
    pub luts_per_step: LutSubset,
    /// Divide the summed loss by the number of targeted LUTs.
    pub mean_over_luts: bool,
    /// Worker threads for per-LUT gradient evaluation. Results do not
    /// depend on this value.
    pub threads: usize,
    /// Record the loss every this many iterations (the first and last are
    /// always recorded).
    pub log_every: usize,
    /// Uniform colors used for the per-LUT ΔE estimate after training.
    pub quick_eval_colors: usize,
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let paper = Self {
            batch_size: 2048,
            total_iters: 30_760,
            lr: 0.04,
            lr_halve_every: 2560,
            loss: LossKind::L2,
            seed: 0,
            luts_per_step: LutSubset::All,
            mean_over_luts: false,
            threads: 1,
            log_every: 100,
            quick_eval_colors: 10_000,
        };
        match preset {
            Preset::Paper => paper,
            Preset::Desk => Self {
                total_iters: 30_760 / 4,
                lr_halve_every: 2560 / 4,
                ..paper
            },
        }
    }

    /// Learning rate in effect at `iter`: halved at every multiple of
    /// `lr_halve_every`.
    pub fn lr_at(&self, iter: usize) -> f64 {
        let halvings = (iter / self.lr_halve_every).min(1074) as i32;
        self.lr * 0.5f64.powi(halvings)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.to_string()));
        if self.batch_size == 0 || self.total_iters == 0 || self.lr_halve_every == 0 {
            return bad("batch size, iterations and halving period must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.threads == 0 || self.log_every == 0 {
            return bad("threads and log interval must be positive");
        }
        if let LutSubset::Random(0) = self.luts_per_step {
            return bad("random LUT subset must contain at least one LUT");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub lr: f64,
    pub loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
    /// Loss of every iteration, in order.
    pub losses: Vec<f64>,
    /// Mean ΔE per LUT on held-out uniform colors after training.
    pub final_delta_e: Vec<f64>,
}

impl TrainingLog {
    /// One `iter lr loss wall_ms` line per record.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# iter lr loss wall_ms\n");
        for r in &self.records {
            out.push_str(&format!("{} {:e} {:.9e} {}\n", r.iter, r.lr, r.loss, r.wall_ms));
        }
        out
    }

    pub fn to_json_lines(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain record") + "\n")
            .collect()
    }

    /// Moving average of the per-iteration loss over `window` iterations.
    pub fn smoothed_losses(&self, window: usize) -> Vec<f64> {
        self.losses
            .chunks(window.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

pub struct FitOutput {
    pub model: LutNetModel,
    pub log: TrainingLog,
}

/// Targets for one LUT on a batch, in normalized space.
fn lut_targets(model: &LutNetModel, lut: &Lut3D, unit: &[[f64; 3]]) -> Result<Array2<f64>, TrainError> {
    let out = lut.apply_trilinear(unit)?;
    Ok(model.normalize_unit(&out))
}

/// LUT indices targeted at `iter`.
fn targeted_luts(config: &TrainConfig, num_luts: usize, iter: usize) -> Vec<usize> {
    match config.luts_per_step {
        LutSubset::Random(k) if k < num_luts => {
            // offset keeps this stream disjoint from the color streams
            let mut rng = stream_rng(config.seed, (1u64 << 62) + iter as u64);
            let mut picked = sample_indices(&mut rng, num_luts, k).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..num_luts).collect(),
    }
}

/// Loss and compact gradients of each targeted LUT, in index order.
fn per_lut_gradients(
    model: &LutNetModel,
    luts: &[Lut3D],
    targets: &[usize],
    x: &Array2<f64>,
    unit: &[[f64; 3]],
    loss: LossKind,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<(f64, Vec<BlockGrads>)>, TrainError> {
    let one = |&i: &usize| -> Result<(f64, Vec<BlockGrads>), TrainError> {
        let target = lut_targets(model, &luts[i], unit)?;
        Ok(model.backward_compact(x, &model.one_hot(i)?, &target, loss)?)
    };
    match pool {
        Some(pool) => pool.install(|| targets.par_iter().map(one).collect()),
        None => targets.iter().map(one).collect(),
    }
}

/// Trains a model embedding `luts` on colors drawn from `dist`.
///
/// `model_config.num_luts` must equal `luts.len()`. Results are bit-exact
/// for a given `(luts, configs, dist)` regardless of `config.threads`,
/// because per-LUT gradients are reduced in LUT order.
pub fn fit(
    luts: &[Lut3D],
    model_config: &ModelConfig,
    config: &TrainConfig,
    dist: &ColorDistribution,
) -> Result<FitOutput, TrainError> {
    config.validate()?;
    if luts.is_empty() {
        return Err(TrainError::EmptyInput);
    }
    if model_config.num_luts != luts.len() {
        return Err(TrainError::BadConfig(format!(
            "model configured for {} LUTs but {} supplied",
            model_config.num_luts,
            luts.len()
        )));
    }
    let mut model = init_model(model_config, config.seed)?;
    let names = luts
        .iter()
        .map(|l| l.title().unwrap_or_default().to_string())
        .collect();
    model.set_lut_names(names)?;
    train_model(&mut model, luts, config, dist).map(|log| FitOutput { model, log })
}

/// Runs the training loop on an existing model in place.
pub fn train_model(
    model: &mut LutNetModel,
    luts: &[Lut3D],
    config: &TrainConfig,
    dist: &ColorDistribution,
) -> Result<TrainingLog, TrainError> {
    config.validate()?;
    if luts.len() != model.num_luts() {
        return Err(TrainError::BadConfig("LUT count differs from model".into()));
    }
    let pool = if config.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| TrainError::BadConfig(e.to_string()))?,
        )
    } else {
        None
    };
    let invertible = model.is_invertible();
    let mut spectral = SpectralState::new(model);
    let mut adam = AdamState::new(model.param_slices().iter().map(|s| s.len()));
    let mut log = TrainingLog::default();
    let start = Instant::now();

    for iter in 0..config.total_iters {
        let lr = config.lr_at(iter);
        let codes = sample_colors(dist, config.batch_size, config.seed, iter as u64)?;
        let unit: Vec<[f64; 3]> = codes.iter().map(|c| code_to_unit(*c)).collect();
        let x = model.normalize_codes(&codes);
        let targets = targeted_luts(config, luts.len(), iter);

        let parts = per_lut_gradients(model, luts, &targets, &x, &unit, config.loss, pool.as_ref())?;
        let mut grads = ModelGrads::zeros_like(model);
        let mut total = 0.0;
        for (&i, (value, compact)) in targets.iter().zip(&parts) {
            total += value;
            grads.accumulate(compact, &model.one_hot(i)?);
        }
        if config.mean_over_luts {
            let k = targets.len() as f64;
            total /= k;
            grads.scale(1.0 / k);
        }
        if !total.is_finite() {
            return Err(TrainError::NonFiniteLoss { iter, loss: total });
        }
        log.losses.push(total);
        if iter % config.log_every == 0 || iter + 1 == config.total_iters {
            log.records.push(LogRecord {
                iter,
                lr,
                loss: total,
                wall_ms: start.elapsed().as_millis() as u64,
            });
        }

        adam.step(model.param_slices_mut(), grads.slices(), lr)?;
        if invertible {
            model.enforce_contraction(&mut spectral, 1)?;
        }
    }

    if invertible {
        model.enforce_contraction(&mut spectral, SpectralState::FINAL_ITERS)?;
    }
    model.round_to_f32();
    log.final_delta_e = quick_delta_e(model, luts, config)?;
    Ok(log)
}

fn quick_delta_e(model: &LutNetModel, luts: &[Lut3D], config: &TrainConfig) -> Result<Vec<f64>, TrainError> {
    if config.quick_eval_colors == 0 {
        return Ok(Vec::new());
    }
    let codes = sample_colors(
        &ColorDistribution::Uniform,
        config.quick_eval_colors,
        config.seed,
        u64::MAX,
    )?;
    let unit: Vec<[f64; 3]> = codes.iter().map(|c| code_to_unit(*c)).collect();
    luts.iter()
        .enumerate()
        .map(|(i, lut)| {
            let truth = lut.apply_trilinear(&unit)?;
            let pred = model.forward_unit(&unit, &model.one_hot(i)?)?;
            Ok(truth.iter().zip(&pred).map(|(t, p)| delta_e_srgb(*t, *p)).sum::<f64>() / unit.len() as f64)
        })
        .collect()
}
