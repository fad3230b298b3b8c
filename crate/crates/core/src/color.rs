//! Channel normalization, sRGB to CIELAB conversion and the color metrics
//! used to score reconstructions (CIE76 ΔE and PSNR).

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ColorError {
    #[error("normalization half-range must lie in (0, 1), got {0}")]
    BadHalfRange(f64),
    #[error("shape mismatch: {0} vs {1} values")]
    ShapeMismatch(usize, usize),
    #[error("statistics requested over an empty set")]
    EmptyInput,
    #[error("quantile must lie in (0, 1), got {0}")]
    BadQuantile(f64),
}

/// Half-range `a` of the symmetric interval `[-a, a]` that 8-bit channels
/// are mapped into before entering the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    a: f64,
}

impl NormParams {
    pub const DEFAULT_HALF_RANGE: f64 = 0.83;

    pub fn new(a: f64) -> Result<Self, ColorError> {
        if a.is_finite() && a > 0.0 && a < 1.0 {
            Ok(Self { a })
        } else {
            Err(ColorError::BadHalfRange(a))
        }
    }

    pub fn half_range(&self) -> f64 {
        self.a
    }

    /// `2a(c/255 - 1/2)` for an 8-bit code (integral or not).
    #[inline]
    pub fn normalize(&self, code: f64) -> f64 {
        2.0 * self.a * (code / 255.0 - 0.5)
    }

    /// Maps a unit-range channel value into `[-a, a]`.
    #[inline]
    pub fn normalize_unit(&self, unit: f64) -> f64 {
        2.0 * self.a * (unit - 0.5)
    }

    /// Inverse affine map back to the unit range, without clipping.
    #[inline]
    pub fn to_unit(&self, normalized: f64) -> f64 {
        normalized / (2.0 * self.a) + 0.5
    }

    /// Inverse map, clipped to `[0, 1]` and quantized to the nearest code.
    #[inline]
    pub fn denormalize(&self, normalized: f64) -> u8 {
        quantize_unit(self.to_unit(normalized))
    }
}

impl Default for NormParams {
    fn default() -> Self {
        Self {
            a: Self::DEFAULT_HALF_RANGE,
        }
    }
}

/// Clips to `[0, 1]` and rounds half away from zero onto `0..=255`.
#[inline]
pub fn quantize_unit(unit: f64) -> u8 {
    if unit.is_nan() {
        return 0;
    }
    (unit.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }
}

/// D65 reference white, 2° observer.
pub const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

/// Linear sRGB to XYZ (D65).
pub const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const DELTA: f64 = 6.0 / 29.0;

/// sRGB transfer function decode, returning the value and its derivative.
#[inline]
fn srgb_linearize(c: f64) -> (f64, f64) {
    if c <= 0.04045 {
        (c / 12.92, 1.0 / 12.92)
    } else {
        let base = (c + 0.055) / 1.055;
        let v = base.powf(2.4);
        (v, 2.4 * v / base / 1.055)
    }
}

#[inline]
fn lab_f(t: f64) -> (f64, f64) {
    let d3 = DELTA * DELTA * DELTA;
    if t > d3 {
        let v = t.cbrt();
        (v, 1.0 / (3.0 * v * v))
    } else {
        let slope = 1.0 / (3.0 * DELTA * DELTA);
        (t * slope + 4.0 / 29.0, slope)
    }
}

/// Converts gamma-encoded sRGB in `[0, 1]` to CIELAB (D65).
///
/// Inputs slightly outside the unit cube are accepted: both transfer
/// branches extend naturally, which the ΔE training loss relies on.
pub fn srgb_to_lab(rgb: [f64; 3]) -> LabColor {
    srgb_to_lab_with_jacobian(rgb).0
}

/// Same as [`srgb_to_lab`], also returning `d(L, a, b) / d(r, g, b)` as
/// a row-major 3×3 matrix.
pub fn srgb_to_lab_with_jacobian(rgb: [f64; 3]) -> (LabColor, [[f64; 3]; 3]) {
    let mut lin = [0.0; 3];
    let mut dlin = [0.0; 3];
    for c in 0..3 {
        let (v, d) = srgb_linearize(rgb[c]);
        lin[c] = v;
        dlin[c] = d;
    }

    let mut f = [0.0; 3];
    let mut df = [0.0; 3];
    for (row, m) in SRGB_TO_XYZ.iter().enumerate() {
        let xyz = m[0] * lin[0] + m[1] * lin[1] + m[2] * lin[2];
        let (v, d) = lab_f(xyz / WHITE_D65[row]);
        f[row] = v;
        df[row] = d / WHITE_D65[row];
    }

    let lab = LabColor {
        l: 116.0 * f[1] - 16.0,
        a: 500.0 * (f[0] - f[1]),
        b: 200.0 * (f[1] - f[2]),
    };

    // df_row/drgb_col = df[row] * M[row][col] * dlin[col]
    let mut dfx = [[0.0; 3]; 3];
    for row in 0..3 {
        for col in 0..3 {
            dfx[row][col] = df[row] * SRGB_TO_XYZ[row][col] * dlin[col];
        }
    }
    let mut jac = [[0.0; 3]; 3];
    for col in 0..3 {
        jac[0][col] = 116.0 * dfx[1][col];
        jac[1][col] = 500.0 * (dfx[0][col] - dfx[1][col]);
        jac[2][col] = 200.0 * (dfx[1][col] - dfx[2][col]);
    }
    (lab, jac)
}

/// CIE76 color difference.
#[inline]
pub fn delta_e76(x: LabColor, y: LabColor) -> f64 {
    let dl = x.l - y.l;
    let da = x.a - y.a;
    let db = x.b - y.b;
    (dl * dl + da * da + db * db).sqrt()
}

/// ΔE between two unit-range sRGB colors.
pub fn delta_e_srgb(x: [f64; 3], y: [f64; 3]) -> f64 {
    delta_e76(srgb_to_lab(x), srgb_to_lab(y))
}

/// Reported when two 8-bit signals are identical.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Peak signal-to-noise ratio over all channels of two 8-bit buffers.
pub fn psnr(x: &[u8], y: &[u8]) -> Result<f64, ColorError> {
    if x.len() != y.len() {
        return Err(ColorError::ShapeMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(ColorError::EmptyInput);
    }
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(psnr_from_mse(sse / x.len() as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DeltaEStats {
    pub mean: f64,
    pub quantile: f64,
}

/// Arithmetic mean and nearest-rank quantile (element `ceil(qN) - 1` of the
/// ascending sort).
pub fn delta_e_stats(errors: &[f64], q: f64) -> Result<DeltaEStats, ColorError> {
    if errors.is_empty() {
        return Err(ColorError::EmptyInput);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(ColorError::BadQuantile(q));
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(DeltaEStats {
        mean,
        quantile: nearest_rank(errors, q),
    })
}

pub(crate) fn nearest_rank(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn normalize_endpoints() {
        let n = NormParams::default();
        assert_abs_diff_eq!(n.normalize(255.0), 0.83, epsilon = 1e-15);
        assert_abs_diff_eq!(n.normalize(0.0), -0.83, epsilon = 1e-15);
        assert_eq!(n.normalize(127.5), 0.0);
    }

    #[test]
    fn denormalize_clips_and_inverts() {
        let n = NormParams::default();
        assert_eq!(n.denormalize(0.83), 255);
        assert_eq!(n.denormalize(1.5), 255);
        assert_eq!(n.denormalize(-3.0), 0);
        for code in 0..=255u8 {
            assert_eq!(n.denormalize(n.normalize(code as f64)), code);
        }
    }

    #[test]
    fn rejects_bad_half_range() {
        assert!(NormParams::new(0.0).is_err());
        assert!(NormParams::new(1.0).is_err());
        assert!(NormParams::new(f64::NAN).is_err());
        assert!(NormParams::new(0.5).is_ok());
    }

    #[test]
    fn lab_white_and_black() {
        let w = srgb_to_lab([1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(w.l, 100.0, epsilon = 1e-4);
        assert!(w.a.abs() <= 0.01 && w.b.abs() <= 0.01);
        let k = srgb_to_lab([0.0, 0.0, 0.0]);
        assert_eq!((k.l, k.a, k.b), (0.0, 0.0, 0.0));
        assert_abs_diff_eq!(delta_e76(w, k), 100.0, epsilon = 0.02);
    }

    #[test]
    fn lab_mid_gray_matches_reference() {
        // Independent closed form: gray has Y = lin(0.5), L = 116 Y^(1/3) - 16.
        let y = ((0.5f64 + 0.055) / 1.055).powf(2.4);
        let expected = 116.0 * y.cbrt() - 16.0;
        let lab = srgb_to_lab([0.5, 0.5, 0.5]);
        assert_abs_diff_eq!(lab.l, expected, epsilon = 1e-3);
        // Published value for sRGB 128/255 is L ≈ 53.585; 0.5 is slightly darker.
        assert_abs_diff_eq!(lab.l, 53.389, epsilon = 1e-2);
    }

    #[test]
    fn delta_e_single_axis() {
        let d = delta_e76(LabColor::new(50.0, 0.0, 0.0), LabColor::new(52.0, 0.0, 0.0));
        assert_eq!(d, 2.0);
        let c = LabColor::new(12.0, -3.0, 4.0);
        assert_eq!(delta_e76(c, c), 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let eps = 1e-6;
        for rgb in [[0.2, 0.5, 0.9], [0.01, 0.03, 0.02], [0.7, 0.1, 0.4]] {
            let (_, jac) = srgb_to_lab_with_jacobian(rgb);
            for col in 0..3 {
                let mut hi = rgb;
                let mut lo = rgb;
                hi[col] += eps;
                lo[col] -= eps;
                let (h, l) = (srgb_to_lab(hi), srgb_to_lab(lo));
                let fd = [
                    (h.l - l.l) / (2.0 * eps),
                    (h.a - l.a) / (2.0 * eps),
                    (h.b - l.b) / (2.0 * eps),
                ];
                for row in 0..3 {
                    assert_abs_diff_eq!(jac[row][col], fd[row], epsilon = 1e-4 * (1.0 + fd[row].abs()));
                }
            }
        }
    }

    #[test]
    fn psnr_cases() {
        let x = vec![10u8, 20, 30, 40, 50, 60];
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP_DB);
        let y: Vec<u8> = x.iter().map(|v| v + 1).collect();
        assert_abs_diff_eq!(psnr(&x, &y).unwrap(), 20.0 * 255f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(psnr(&x, &y).unwrap(), 48.1308, epsilon = 1e-4);

        // One channel off by 255 among 3N channels: MSE = 255^2 / (3N).
        let n = 100;
        let a = vec![0u8; 3 * n];
        let mut b = a.clone();
        b[7] = 255;
        let expected = 10.0 * (3.0 * n as f64).log10();
        assert_abs_diff_eq!(psnr(&a, &b).unwrap(), expected, epsilon = 1e-12);

        assert_eq!(psnr(&a, &b[..5]), Err(ColorError::ShapeMismatch(300, 5)));
    }

    #[test]
    fn stats_nearest_rank() {
        let s = delta_e_stats(&[1.0, 2.0, 3.0], 0.9).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.quantile, 3.0);
        let s = delta_e_stats(&[0.7; 5], 0.9).unwrap();
        assert_eq!((s.mean, s.quantile), (0.7, 0.7));
        assert_eq!(delta_e_stats(&[], 0.5), Err(ColorError::EmptyInput));
    }

    #[test]
    fn stats_uniform_sanity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>()).collect();
        let s = delta_e_stats(&v, 0.9).unwrap();
        assert!((0.85..=0.95).contains(&s.quantile), "{}", s.quantile);
    }

    #[test]
    fn gray_axis_lightness_is_monotone() {
        let mut last = -1.0;
        for code in 0..=255 {
            let g = code as f64 / 255.0;
            let l = srgb_to_lab([g, g, g]).l;
            assert!(l > last);
            last = l;
        }
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let mut last = f64::INFINITY;
        for k in 1..200 {
            let p = psnr_from_mse(k as f64 * 0.5);
            assert!(p < last);
            last = p;
        }
    }

    proptest! {
        #[test]
        fn delta_e_is_a_metric(
            a in proptest::array::uniform3(0.0f64..1.0),
            b in proptest::array::uniform3(0.0f64..1.0),
            c in proptest::array::uniform3(0.0f64..1.0),
        ) {
            let (la, lb, lc) = (srgb_to_lab(a), srgb_to_lab(b), srgb_to_lab(c));
            prop_assert_eq!(delta_e76(la, lb), delta_e76(lb, la));
            prop_assert!(delta_e76(la, lc) <= delta_e76(la, lb) + delta_e76(lb, lc) + 1e-9);
            prop_assert_eq!(delta_e76(la, la), 0.0);
            if a != b {
                prop_assert!(delta_e76(la, lb) > 0.0);
            }
        }
    }
}
