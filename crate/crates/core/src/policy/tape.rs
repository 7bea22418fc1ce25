//! Operation tape for the policy network.
//!
//! Each forward step records a chain `Affine -> Tanh -> ... -> Affine ->
//! GaussianLogProb` that ends in one scalar log-density. The reverse sweep
//! walks the tape backwards once, seeding each chain with the upstream
//! derivative of its scalar and accumulating parameter gradients into a flat
//! buffer laid out like [`PolicyParams::values`](super::PolicyParams).

use alloc::vec;
use alloc::vec::Vec;

use super::{LayerShape, PolicyParams};

#[derive(Debug, Clone)]
pub(crate) enum TapeOp {
    /// `y = W x + b` for `layer`; keeps `x`.
    Affine { layer: usize, input: Vec<f64> },
    /// `y = tanh(x)`; keeps `y`.
    Tanh { output: Vec<f64> },
    /// Diagonal Gaussian log-density of `target` under the head output
    /// `raw = [mean; raw_log_std]`.
    GaussianLogProb { raw: Vec<f64>, target: Vec<f64>, output: usize, min_log_std: f64, max_log_std: f64 },
}

/// Recorded forward pass from parameters to a list of scalar log-densities.
#[derive(Debug, Clone, Default)]
pub struct ComputationTape {
    pub(crate) ops: Vec<TapeOp>,
    pub(crate) num_outputs: usize,
}

impl ComputationTape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Scalar outputs recorded so far (one per decoded patch).
    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub(crate) fn push(&mut self, op: TapeOp) {
        self.ops.push(op);
    }

    pub(crate) fn next_output(&mut self) -> usize {
        self.num_outputs += 1;
        self.num_outputs - 1
    }

    /// Reverse sweep. `upstream[i]` is `dLoss/d(output i)`; gradients are
    /// added into `grad`. Returns the number of operations visited, which
    /// always equals [`len`](Self::len).
    pub fn backward(&self, params: &PolicyParams, upstream: &[f64], grad: &mut [f64]) -> usize {
        assert_eq!(upstream.len(), self.num_outputs, "one upstream derivative per output");
        assert_eq!(grad.len(), params.values.len(), "gradient buffer must match parameters");
        let shapes = params.layer_shapes();
        let mut g: Vec<f64> = Vec::new();
        let mut visited = 0;
        for op in self.ops.iter().rev() {
            visited += 1;
            match op {
                TapeOp::GaussianLogProb { raw, target, output, min_log_std, max_log_std } => {
                    let seed = upstream[*output];
                    let n = target.len();
                    g.clear();
                    g.resize(2 * n, 0.0);
                    if seed != 0.0 {
                        for i in 0..n {
                            let mean = raw[i];
                            let raw_ls = raw[n + i];
                            let ls = raw_ls.clamp(*min_log_std, *max_log_std);
                            let z = (target[i] - mean) * libm::exp(-ls);
                            g[i] = seed * z * libm::exp(-ls);
                            if raw_ls > *min_log_std && raw_ls < *max_log_std {
                                g[n + i] = seed * (z * z - 1.0);
                            }
                        }
                    }
                }
                TapeOp::Tanh { output } => {
                    for (gi, y) in g.iter_mut().zip(output) {
                        *gi *= 1.0 - y * y;
                    }
                }
                TapeOp::Affine { layer, input } => {
                    let LayerShape { inputs, outputs, offset } = shapes[*layer];
                    let weights = &params.values[offset..offset + inputs * outputs];
                    let (gw, gb) = grad[offset..offset + inputs * outputs + outputs].split_at_mut(inputs * outputs);
                    for o in 0..outputs {
                        let go = g[o];
                        if go == 0.0 {
                            continue;
                        }
                        gb[o] += go;
                        let row = &mut gw[o * inputs..(o + 1) * inputs];
                        for (w, x) in row.iter_mut().zip(input) {
                            *w += go * x;
                        }
                    }
                    if *layer > 0 {
                        let mut gin = vec![0.0; inputs];
                        for o in 0..outputs {
                            let go = g[o];
                            if go == 0.0 {
                                continue;
                            }
                            let row = &weights[o * inputs..(o + 1) * inputs];
                            for (gi, w) in gin.iter_mut().zip(row) {
                                *gi += go * w;
                            }
                        }
                        g = gin;
                    }
                }
            }
        }
        visited
    }
}
