//! Training objectives over normalized color batches.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::color::{srgb_to_lab, srgb_to_lab_with_jacobian, NormParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Mean squared error over all channels.
    #[default]
    L2,
    /// Mean CIE76 distance after mapping both sides back to sRGB.
    DeltaE,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "mse" => Ok(Self::L2),
            "deltae" | "delta-e" | "de" => Ok(Self::DeltaE),
            _ => Err(format!("unknown loss `{s}` (expected l2 or deltae)")),
        }
    }
}

/// Scalar loss and its gradient with respect to `output`.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub loss: f64,
    pub grad: Array2<f64>,
}

/// Evaluates `kind` between two `B×3` batches in normalized space. The
/// caller checks shapes.
pub fn compute_loss(output: &Array2<f64>, target: &Array2<f64>, kind: LossKind, norm: NormParams) -> LossValue {
    debug_assert_eq!(output.dim(), target.dim());
    let rows = output.nrows();
    match kind {
        LossKind::L2 => {
            let count = (rows * 3) as f64;
            let diff = output - target;
            let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
            let grad = diff * (2.0 / count);
            LossValue { loss, grad }
        }
        LossKind::DeltaE => {
            let to_unit = |row: ndarray::ArrayView1<f64>| {
                [norm.to_unit(row[0]), norm.to_unit(row[1]), norm.to_unit(row[2])]
            };
            let scale = 1.0 / (2.0 * norm.half_range() * rows as f64);
            let mut grad = Array2::zeros((rows, 3));
            let mut total = 0.0;
            Zip::from(grad.rows_mut())
                .and(output.rows())
                .and(target.rows())
                .for_each(|mut g, o, t| {
                    let (lo, jac) = srgb_to_lab_with_jacobian(to_unit(o));
                    let lt = srgb_to_lab(to_unit(t));
                    let d = [lo.l - lt.l, lo.a - lt.a, lo.b - lt.b];
                    let dist = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    total += dist;
                    if dist > 0.0 {
                        for c in 0..3 {
                            let dlab = (d[0] * jac[0][c] + d[1] * jac[1][c] + d[2] * jac[2][c]) / dist;
                            g[c] = dlab * scale;
                        }
                    }
                });
            LossValue {
                loss: total / rows as f64,
                grad,
            }
        }
    }
}
