use super::TrainError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(shapes: impl IntoIterator<Item = usize>) -> Self {
        let first: Vec<Vec<f64>> = shapes.into_iter().map(|n| vec![0.0; n]).collect();
        Self {
            second: first.clone(),
            first,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) -> Result<(), TrainError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "{} parameter tensors, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.len() != self.first[i].len() || g.len() != self.first[i].len() {
                return Err(TrainError::ShapeMismatch(format!("tensor {i} length differs")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for k in 0..p.len() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = AdamState::new([3]);
        let mut p = vec![1.0, -2.0, 0.5];
        s.step(vec![&mut p[..]], vec![&[0.0; 3][..]], 0.04).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn moments_decay_without_gradient() {
        let mut s = AdamState::new([1]);
        let mut p = [0.0];
        s.step(vec![&mut p[..]], vec![&[1.0][..]], 0.01).unwrap();
        let (m, v) = (s.first_moments()[0][0], s.second_moments()[0][0]);
        s.step(vec![&mut p[..]], vec![&[0.0][..]], 0.01).unwrap();
        assert!((s.first_moments()[0][0] - m * BETA1).abs() < 1e-15);
        assert!((s.second_moments()[0][0] - v * BETA2).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new([1]);
        let mut p = [0.0];
        s.step(vec![&mut p[..]], vec![&[1.0][..]], 0.04).unwrap();
        // m̂ = 1, v̂ = 1: update = lr / (1 + ε)
        assert!((p[0] + 0.04 / (1.0 + EPSILON)).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut s = AdamState::new([2]);
        let mut p = [0.0];
        assert!(matches!(
            s.step(vec![&mut p[..]], vec![&[1.0][..]], 0.1),
            Err(TrainError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut s = AdamState::new([2]);
            let mut p = vec![0.3, -0.1];
            for i in 0..50 {
                let g = [p[0] * 2.0 + i as f64 * 0.01, p[1].sin()];
                s.step(vec![&mut p[..]], vec![&g[..]], 0.02).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
