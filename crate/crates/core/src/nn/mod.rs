//! The neural LUT representation: conditioned residual blocks between an
//! `atanh`/`tanh` pair, with exact reverse-mode gradients, spectral
//! normalization and fixed-point inversion.

mod block;
mod gradcheck;
mod model;
mod spectral;

use thiserror::Error;

pub use block::{lipswish, lipswish_derivative, ActNorm, BlockGrads, BlockTrace, LinearLayer, ResidualBlock};
pub use gradcheck::{gradient_check, GradCheckReport, GroupError};
pub use model::{
    init_model, BackwardOutput, ForwardOutput, LutNetModel, ModelConfig, ModelGrads, SizeClass, DEFAULT_HIDDEN,
    DEFAULT_LIPSCHITZ, MAX_LUTS, PARAM_GROUPS,
};
pub use spectral::{
    block_inverse, block_inverse_traced, branch_lipschitz_bound, fixed_point_inverse, spectral_normalize,
    PowerIteration, SpectralState,
};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index vector has {found} entries, model embeds {expected} LUTs")]
    IndexLengthMismatch { expected: usize, found: usize },
    #[error("LUT index {index} out of range for {count} embedded LUTs")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
    #[error("Lipschitz coefficient must lie in (0, 1), got {0}")]
    BadCoefficient(f64),
    #[error("residual branch is not contractive (Lipschitz bound {0:.4})")]
    NotContractive(f64),
    #[error("model was not built as invertible")]
    NotInvertibleModel,
    #[error("gradient check failed: group `{group}` relative error {error:.3e} > {tolerance:.1e}")]
    GradientMismatch { group: String, error: f64, tolerance: f64 },
}

/// Weights selecting (or blending) embedded LUTs. The first-layer bias of
/// every block is `oᵀE`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexVector {
    weights: Vec<f64>,
}

impl IndexVector {
    pub fn one_hot(len: usize, index: usize) -> Result<Self, NnError> {
        if index >= len {
            return Err(NnError::IndexOutOfRange { index, count: len });
        }
        let mut weights = vec![0.0; len];
        weights[index] = 1.0;
        Ok(Self { weights })
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self, NnError> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(NnError::ShapeMismatch("index weights must be finite".into()));
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The selected index when this vector is exactly one-hot.
    pub fn as_one_hot(&self) -> Option<usize> {
        let mut hot = None;
        for (i, &w) in self.weights.iter().enumerate() {
            if w == 1.0 && hot.is_none() {
                hot = Some(i);
            } else if w != 0.0 {
                return None;
            }
        }
        hot
    }
}
