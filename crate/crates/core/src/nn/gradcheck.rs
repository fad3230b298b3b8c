use ndarray::Array2;
use serde::Serialize;

use super::model::{LutNetModel, PARAM_GROUPS};
use super::{IndexVector, NnError};
use crate::train::loss::LossKind;

#[derive(Debug, Clone, Serialize)]
pub struct GroupError {
    pub group: &'static str,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    /// Every analytic gradient was exactly zero, so nothing was compared.
    pub skipped: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GroupError> {
        self.groups
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares reverse-mode gradients against central finite differences with
/// step `eps`, parameter by parameter.
///
/// The relative error of a parameter is `|a − n| / max(|a|, |n|, floor)`
/// where `floor = 1e-6 · max|a|` over the whole model, so parameters whose
/// gradient is negligible do not dominate through division by ~0.
/// Fails with [`NnError::GradientMismatch`] if any group exceeds `tolerance`.
pub fn gradient_check(
    model: &LutNetModel,
    x: &Array2<f64>,
    o: &IndexVector,
    target: &Array2<f64>,
    loss: LossKind,
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport, NnError> {
    let analytic = model.backward(x, o, target, loss)?.grads;
    let scale = analytic.max_abs();
    let mut groups: Vec<GroupError> = PARAM_GROUPS
        .iter()
        .map(|&group| GroupError {
            group,
            max_rel_error: 0.0,
            checked: 0,
        })
        .collect();
    if scale == 0.0 {
        return Ok(GradCheckReport { groups, skipped: true });
    }
    let floor = 1e-6 * scale;

    let analytic_slices: Vec<Vec<f64>> = analytic.slices().iter().map(|s| s.to_vec()).collect();
    let mut probe = model.clone();
    for (slice_idx, grads) in analytic_slices.iter().enumerate() {
        let group = &mut groups[slice_idx % PARAM_GROUPS.len()];
        for (k, &a) in grads.iter().enumerate() {
            let original = probe.param_slices()[slice_idx][k];
            probe.param_slices_mut()[slice_idx][k] = original + eps;
            let up = probe.loss(x, o, target, loss)?;
            probe.param_slices_mut()[slice_idx][k] = original - eps;
            let down = probe.loss(x, o, target, loss)?;
            probe.param_slices_mut()[slice_idx][k] = original;
            let numeric = (up - down) / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / denom;
            group.max_rel_error = group.max_rel_error.max(rel);
            group.checked += 1;
        }
    }

    let report = GradCheckReport { groups, skipped: false };
    if let Some(worst) = report.worst() {
        if worst.max_rel_error > tolerance {
            return Err(NnError::GradientMismatch {
                group: worst.group.to_string(),
                error: worst.max_rel_error,
                tolerance,
            });
        }
    }
    Ok(report)
}
