//! Spectral normalization of residual branches and their inversion by
//! fixed-point iteration.
//!
//! A branch `x ↦ s ⊙ W₄ φ(W₃ φ(W₂ φ(W₁x + e)))` with `|φ'| ≤ 1` has Lipschitz
//! constant at most `max|s| · ∏ σ_max(Wⱼ)`. Rescaling every `Wⱼ` to spectral
//! norm `c^{1/4}` and clamping `|s| ≤ 1` bounds it by `c < 1`, so
//! `x ↦ x + branch(x)` is invertible by Banach iteration.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::block::ResidualBlock;
use super::model::LutNetModel;
use super::{IndexVector, NnError};

/// Power-iteration estimate of the largest singular value, keeping the left
/// singular vector between calls so repeated calls keep refining.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerIteration {
    u: Array1<f64>,
}

impl PowerIteration {
    pub fn new(rows: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
        let mut u: Array1<f64> = Array1::from_shape_fn(rows, |_| rng.gen_range(-1.0..1.0));
        let n = u.dot(&u).sqrt();
        if n > 0.0 {
            u /= n;
        } else {
            u.fill(1.0 / (rows as f64).sqrt());
        }
        Self { u }
    }

    /// Runs `iters` rounds and returns `σ̃ = uᵀWv`.
    pub fn estimate(&mut self, w: &Array2<f64>, iters: usize) -> f64 {
        assert_eq!(w.nrows(), self.u.len(), "power iteration vector does not match matrix");
        let mut sigma = 0.0;
        for _ in 0..iters.max(1) {
            let mut v = w.t().dot(&self.u);
            let nv = v.dot(&v).sqrt();
            if nv == 0.0 {
                return 0.0;
            }
            v /= nv;
            let mut u = w.dot(&v);
            let nu = u.dot(&u).sqrt();
            if nu == 0.0 {
                return 0.0;
            }
            sigma = nu;
            u /= nu;
            self.u = u;
        }
        sigma
    }
}

/// Power-iteration vectors for every layer of every block.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    blocks: Vec<[PowerIteration; 4]>,
}

impl SpectralState {
    /// Iterations used when normalizing outside the training loop.
    pub const FINAL_ITERS: usize = 50;

    pub fn new(model: &LutNetModel) -> Self {
        let blocks = model
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, b)| Self::for_block(b, i as u64))
            .collect();
        Self { blocks }
    }

    pub fn for_block(block: &ResidualBlock, salt: u64) -> [PowerIteration; 4] {
        std::array::from_fn(|j| PowerIteration::new(block.layers[j].outputs(), salt.wrapping_mul(4).wrapping_add(j as u64)))
    }

    pub fn blocks_mut(&mut self) -> &mut [[PowerIteration; 4]] {
        &mut self.blocks
    }
}

/// Rescales each layer of `block` to spectral norm `c^{1/4}` (or `c` when
/// `strict`) using the persistent estimates in `state`, and clamps the
/// actnorm scale into `[-1, 1]`.
pub fn spectral_normalize(
    block: &mut ResidualBlock,
    state: &mut [PowerIteration; 4],
    coeff: f64,
    iters: usize,
    strict: bool,
) -> Result<(), NnError> {
    if !(coeff > 0.0 && coeff < 1.0) {
        return Err(NnError::BadCoefficient(coeff));
    }
    if iters == 0 {
        return Err(NnError::BadConfig("power iterations must be at least 1".into()));
    }
    let target = if strict { coeff } else { coeff.powf(0.25) };
    for (layer, pi) in block.layers.iter_mut().zip(state.iter_mut()) {
        let sigma = pi.estimate(&layer.weight, iters);
        if sigma > 0.0 {
            layer.weight *= target / sigma;
        }
    }
    for s in &mut block.actnorm.scale {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok(())
}

/// Upper bound on the branch Lipschitz constant from fresh power-iteration
/// estimates of each layer's spectral norm.
pub fn branch_lipschitz_bound(block: &ResidualBlock, iters: usize) -> f64 {
    let mut state = SpectralState::for_block(block, 0);
    let scale = block.actnorm.scale.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    block
        .layers
        .iter()
        .zip(state.iter_mut())
        .map(|(l, pi)| pi.estimate(&l.weight, iters))
        .product::<f64>()
        * scale
}

/// Largest per-row Euclidean distance.
fn max_row_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Solves `x + branch(x) = y` by `x₀ = y`, `x_{j+1} = y − branch(x_j)`.
/// Returns `x_n` and the residual of every iterate `x_0 … x_n`, measured
/// as the largest per-color Euclidean norm of `x_j + branch(x_j) − y`. For a
/// contractive branch this sequence never increases.
pub fn fixed_point_inverse<F>(y: &Array2<f64>, iters: usize, mut branch: F) -> (Array2<f64>, Vec<f64>)
where
    F: FnMut(&Array2<f64>) -> Array2<f64>,
{
    let mut x = y.clone();
    let mut residuals = Vec::with_capacity(iters + 1);
    for _ in 0..iters {
        let next = y - &branch(&x);
        // x_j + branch(x_j) - y == x_j - x_{j+1}
        residuals.push(max_row_distance(&x, &next));
        x = next;
    }
    let reconstructed = &x + &branch(&x);
    residuals.push(max_row_distance(&reconstructed, y));
    (x, residuals)
}

fn check_inverse_args(block: &ResidualBlock, y: &Array2<f64>, o: &IndexVector, iters: usize) -> Result<(), NnError> {
    if iters == 0 {
        return Err(NnError::BadConfig("fixed-point iterations must be at least 1".into()));
    }
    if y.ncols() != 3 {
        return Err(NnError::ShapeMismatch(format!("expected B×3 batch, got {:?}", y.dim())));
    }
    if y.nrows() == 0 {
        return Err(NnError::EmptyBatch);
    }
    if o.len() != block.num_luts() {
        return Err(NnError::IndexLengthMismatch {
            expected: block.num_luts(),
            found: o.len(),
        });
    }
    let bound = branch_lipschitz_bound(block, SpectralState::FINAL_ITERS);
    if bound >= 1.0 {
        return Err(NnError::NotContractive(bound));
    }
    Ok(())
}

/// Inverts `x ↦ x + branch(x)` for a contractive block.
pub fn block_inverse(block: &ResidualBlock, y: &Array2<f64>, o: &IndexVector, iters: usize) -> Result<Array2<f64>, NnError> {
    Ok(block_inverse_traced(block, y, o, iters)?.0)
}

/// [`block_inverse`] that also reports the residual of every iterate.
pub fn block_inverse_traced(
    block: &ResidualBlock,
    y: &Array2<f64>,
    o: &IndexVector,
    iters: usize,
) -> Result<(Array2<f64>, Vec<f64>), NnError> {
    check_inverse_args(block, y, o, iters)?;
    let bias = block.first_bias(o)?;
    Ok(fixed_point_inverse(y, iters, |x| block.forward_with_bias(x, &bias)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_block(seed: u64, hidden: [usize; 3], n: usize) -> ResidualBlock {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ResidualBlock::zeros(hidden, n);
        for l in &mut b.layers {
            l.weight.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        }
        b.embedding.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        b.actnorm.scale = [1.7, -0.4, 0.9];
        b.actnorm.shift = [0.1, 0.0, -0.2];
        b
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let w = array![[3.0, 0.0], [0.0, 1.0]];
        let mut pi = PowerIteration::new(2, 1);
        assert!((pi.estimate(&w, 50) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn normalizes_known_singular_value() {
        let mut b = ResidualBlock::zeros([2, 2, 2], 1);
        for l in &mut b.layers {
            l.weight = Array2::zeros(l.weight.dim());
        }
        b.layers[1].weight = array![[3.0, 0.0], [0.0, 1.0]];
        let mut state = SpectralState::for_block(&b, 0);
        spectral_normalize(&mut b, &mut state, 0.97, 100, false).unwrap();
        let f = 0.97f64.powf(0.25) / 3.0;
        assert!((b.layers[1].weight[[0, 0]] - 3.0 * f).abs() < 1e-12);
        assert!((b.layers[1].weight[[1, 1]] - f).abs() < 1e-12);
        // zero layers stay zero
        assert!(b.layers[0].weight.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_coefficient() {
        let mut b = ResidualBlock::zeros([2, 2, 2], 1);
        let mut state = SpectralState::for_block(&b, 0);
        assert_eq!(
            spectral_normalize(&mut b, &mut state, 1.2, 1, false),
            Err(NnError::BadCoefficient(1.2))
        );
        assert!(spectral_normalize(&mut b, &mut state, 0.0, 1, false).is_err());
    }

    #[test]
    fn normalized_block_is_contractive() {
        let mut b = random_block(3, [8, 16, 8], 2);
        let mut state = SpectralState::for_block(&b, 0);
        spectral_normalize(&mut b, &mut state, 0.97, 100, false).unwrap();
        assert!(b.actnorm.scale.iter().all(|s| s.abs() <= 1.0));
        let bound = branch_lipschitz_bound(&b, 200);
        assert!(bound <= 0.97 * (1.0 + 1e-6), "{bound}");

        let strict_b = {
            let mut s = random_block(3, [8, 16, 8], 2);
            let mut st = SpectralState::for_block(&s, 0);
            spectral_normalize(&mut s, &mut st, 0.97, 100, true).unwrap();
            s
        };
        let strict_bound = branch_lipschitz_bound(&strict_b, 200);
        assert!((strict_bound - 0.97f64.powi(4)).abs() < 1e-6, "{strict_bound}");
    }

    #[test]
    fn zero_branch_inverts_in_one_step() {
        let y = array![[0.2, -0.3, 0.9]];
        let (x, res) = fixed_point_inverse(&y, 1, |x| Array2::zeros(x.dim()));
        assert_eq!(x, y);
        assert_eq!(res, vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_branch_geometric_convergence() {
        let y = array![[0.9, -0.6, 0.3]];
        for n in [1usize, 5, 20] {
            let (x, _) = fixed_point_inverse(&y, n, |x| x * 0.5);
            for c in 0..3 {
                let exact = y[[0, c]] / 1.5;
                let err = (x[[0, c]] - exact).abs();
                // x₀ = y already sits at half the initial distance from the fixed point
                let bound = 0.5f64.powi(n as i32) * exact.abs();
                assert!((err - 0.5 * bound).abs() < 1e-12, "n={n} err={err} bound={bound}");
                assert!(err <= bound);
            }
        }
    }

    #[test]
    fn non_normalized_block_is_rejected() {
        let b = random_block(5, [8, 16, 8], 1);
        let o = IndexVector::one_hot(1, 0).unwrap();
        assert!(matches!(
            block_inverse(&b, &array![[0.0, 0.0, 0.0]], &o, 10),
            Err(NnError::NotContractive(_))
        ));
    }

    #[test]
    fn normalized_block_round_trips() {
        let mut b = random_block(9, [16, 32, 16], 3);
        let mut state = SpectralState::for_block(&b, 0);
        spectral_normalize(&mut b, &mut state, 0.97, 100, false).unwrap();
        let o = IndexVector::one_hot(3, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((200, 3), |_| rng.gen_range(-1.2..1.2));
        let y = &x + &b.forward(&x, &o).unwrap();
        let (inv, res) = block_inverse_traced(&b, &y, &o, 500).unwrap();
        assert!(inv.iter().zip(&x).all(|(a, b)| (a - b).abs() <= 1e-5));
        for w in res.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{} > {}", w[1], w[0]);
        }
    }
}
