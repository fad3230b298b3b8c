use ndarray::{Array1, Array2, Axis, Zip};

use super::{IndexVector, NnError};

const LIPSWISH_SCALE: f64 = 1.1;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x·σ(x)/1.1`; its derivative is bounded by 1 in magnitude.
#[inline]
pub fn lipswish(x: f64) -> f64 {
    x * sigmoid(x) / LIPSWISH_SCALE
}

#[inline]
pub fn lipswish_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    (s + x * s * (1.0 - s)) / LIPSWISH_SCALE
}

/// Bias-free linear map, weight stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: Array2<f64>,
}

impl LinearLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t())
    }
}

/// Per-channel affine map on the residual branch output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActNorm {
    pub scale: [f64; 3],
    pub shift: [f64; 3],
}

impl Default for ActNorm {
    fn default() -> Self {
        Self {
            scale: [1.0; 3],
            shift: [0.0; 3],
        }
    }
}

/// One residual transformation: a four-layer MLP on RGB whose first-layer
/// bias is selected from a per-LUT embedding matrix, followed by actnorm.
/// The skip connection is added by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub layers: [LinearLayer; 4],
    /// `N × h₁`, one bias row per embedded LUT.
    pub embedding: Array2<f64>,
    pub actnorm: ActNorm,
}

/// Activations recorded during a forward pass, consumed by backprop.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    input: Array2<f64>,
    pre: [Array2<f64>; 3],
    post: [Array2<f64>; 3],
    raw: Array2<f64>,
}

/// Gradients of one block. The embedding gradient is kept as the gradient
/// of the first-layer bias; scatter it with the index vector to get rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub weights: [Array2<f64>; 4],
    pub bias: Array1<f64>,
    pub scale: [f64; 3],
    pub shift: [f64; 3],
}

impl BlockGrads {
    pub fn zeros_like(block: &ResidualBlock) -> Self {
        Self {
            weights: block.layers.clone().map(|l| Array2::zeros(l.weight.dim())),
            bias: Array1::zeros(block.hidden()[0]),
            scale: [0.0; 3],
            shift: [0.0; 3],
        }
    }

    pub fn add_assign(&mut self, other: &BlockGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        self.bias += &other.bias;
        for c in 0..3 {
            self.scale[c] += other.scale[c];
            self.shift[c] += other.shift[c];
        }
    }
}

impl ResidualBlock {
    pub fn zeros(hidden: [usize; 3], num_luts: usize) -> Self {
        let [h1, h2, h3] = hidden;
        Self {
            layers: [
                LinearLayer::zeros(3, h1),
                LinearLayer::zeros(h1, h2),
                LinearLayer::zeros(h2, h3),
                LinearLayer::zeros(h3, 3),
            ],
            embedding: Array2::zeros((num_luts, h1)),
            actnorm: ActNorm::default(),
        }
    }

    pub fn hidden(&self) -> [usize; 3] {
        [self.layers[0].outputs(), self.layers[1].outputs(), self.layers[2].outputs()]
    }

    pub fn num_luts(&self) -> usize {
        self.embedding.nrows()
    }

    /// Number of weights in the four linear layers.
    pub fn core_weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len()).sum()
    }

    /// `oᵀE`. Zero weights are skipped so that a one-hot vector reproduces
    /// the selected row bit for bit.
    pub fn first_bias(&self, o: &IndexVector) -> Result<Array1<f64>, NnError> {
        if o.len() != self.num_luts() {
            return Err(NnError::IndexLengthMismatch {
                expected: self.num_luts(),
                found: o.len(),
            });
        }
        let mut bias = Array1::zeros(self.embedding.ncols());
        for (row, &w) in self.embedding.rows().into_iter().zip(o.weights()) {
            if w == 1.0 {
                bias += &row;
            } else if w != 0.0 {
                bias.scaled_add(w, &row);
            }
        }
        Ok(bias)
    }

    fn check_batch(x: &Array2<f64>) -> Result<(), NnError> {
        if x.ncols() != 3 {
            return Err(NnError::ShapeMismatch(format!("expected B×3 batch, got {:?}", x.dim())));
        }
        if x.nrows() == 0 {
            return Err(NnError::EmptyBatch);
        }
        Ok(())
    }

    /// Residual branch output for a batch, without the skip connection.
    pub fn forward(&self, x: &Array2<f64>, o: &IndexVector) -> Result<Array2<f64>, NnError> {
        Self::check_batch(x)?;
        let bias = self.first_bias(o)?;
        Ok(self.forward_with_bias(x, &bias))
    }

    pub(crate) fn forward_with_bias(&self, x: &Array2<f64>, bias: &Array1<f64>) -> Array2<f64> {
        let mut h = self.layers[0].apply(x);
        h += bias;
        h.mapv_inplace(lipswish);
        for layer in &self.layers[1..3] {
            h = layer.apply(&h);
            h.mapv_inplace(lipswish);
        }
        let mut r = self.layers[3].apply(&h);
        self.apply_actnorm(&mut r);
        r
    }

    fn apply_actnorm(&self, r: &mut Array2<f64>) {
        let ActNorm { scale, shift } = self.actnorm;
        for mut row in r.rows_mut() {
            for c in 0..3 {
                row[c] = scale[c] * row[c] + shift[c];
            }
        }
    }

    /// Forward pass that keeps the activations needed for backprop.
    pub fn forward_traced(&self, x: &Array2<f64>, bias: &Array1<f64>) -> (Array2<f64>, BlockTrace) {
        let mut z = self.layers[0].apply(x);
        z += bias;
        let a = z.mapv(lipswish);
        let (z1, a1) = (z, a);
        let z2 = self.layers[1].apply(&a1);
        let a2 = z2.mapv(lipswish);
        let z3 = self.layers[2].apply(&a2);
        let a3 = z3.mapv(lipswish);
        let raw = self.layers[3].apply(&a3);
        let mut out = raw.clone();
        self.apply_actnorm(&mut out);
        let trace = BlockTrace {
            input: x.clone(),
            pre: [z1, z2, z3],
            post: [a1, a2, a3],
            raw,
        };
        (out, trace)
    }

    /// Backpropagates `upstream` (gradient w.r.t. the branch output).
    /// Returns the parameter gradients and the gradient w.r.t. the branch
    /// input (the skip path is the caller's business).
    pub fn backward(&self, trace: &BlockTrace, upstream: &Array2<f64>) -> (BlockGrads, Array2<f64>) {
        let mut scale = [0.0; 3];
        let mut shift = [0.0; 3];
        for (g, r) in upstream.rows().into_iter().zip(trace.raw.rows()) {
            for c in 0..3 {
                scale[c] += g[c] * r[c];
                shift[c] += g[c];
            }
        }
        let mut delta = upstream.clone();
        for mut row in delta.rows_mut() {
            for c in 0..3 {
                row[c] *= self.actnorm.scale[c];
            }
        }

        let mut weights: [Array2<f64>; 4] = Default::default();
        for j in (0..4).rev() {
            let layer_in = if j == 0 { &trace.input } else { &trace.post[j - 1] };
            weights[j] = delta.t().dot(layer_in);
            let back = delta.dot(&self.layers[j].weight);
            if j == 0 {
                let bias = delta.sum_axis(Axis(0));
                return (
                    BlockGrads {
                        weights,
                        bias,
                        scale,
                        shift,
                    },
                    back,
                );
            }
            delta = back;
            Zip::from(&mut delta)
                .and(&trace.pre[j - 1])
                .for_each(|d, &z| *d *= lipswish_derivative(z));
        }
        unreachable!("loop returns at the first layer")
    }
}
