//! Small fully connected networks over a flat parameter slice.

use rand::Rng;

/// Layer widths of a tanh MLP with a linear output layer. Parameters are laid
/// out layer by layer as a row-major weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// Input followed by each hidden layer's post-activation output.
    layers: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "invalid layer sizes {sizes:?}");
        Self { sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Scaled uniform initialization; the output layer is additionally
    /// multiplied by `output_gain`.
    pub fn init(&self, rng: &mut impl Rng, output_gain: f64) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        let last = self.sizes.len() - 2;
        for (i, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if i == last {
                limit *= output_gain;
            }
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64], trace: &mut Trace) -> Vec<f64> {
        debug_assert_eq!(params.len(), self.param_count());
        debug_assert_eq!(input.len(), self.input_dim());
        trace.layers.clear();
        trace.layers.push(input.to_vec());
        let mut offset = 0;
        let n_layers = self.sizes.len() - 1;
        for (i, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &params[offset..offset + fan_in * fan_out];
            let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let x = trace.layers.last().expect("input pushed");
            let mut out: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let row = &weights[j * fan_in..(j + 1) * fan_in];
                    bias[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if i + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
                trace.layers.push(out);
            } else {
                return out;
            }
        }
        unreachable!("network has an output layer")
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, params: &[f64], trace: &Trace, grad_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.param_count());
        let mut offsets = Vec::with_capacity(self.sizes.len() - 1);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = grad_output.to_vec();
        for layer in (0..self.sizes.len() - 1).rev() {
            let (fan_in, fan_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let base = offsets[layer];
            let x = &trace.layers[layer];
            for j in 0..fan_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + j * fan_in..base + (j + 1) * fan_in];
                row.iter_mut().zip(x).for_each(|(g, xi)| *g += d * xi);
                grad[base + fan_in * fan_out + j] += d;
            }
            if layer == 0 {
                break;
            }
            let weights = &params[base..base + fan_in * fan_out];
            // x holds tanh outputs of the previous layer.
            delta = (0..fan_in)
                .map(|i| {
                    let back: f64 = (0..fan_out).map(|j| weights[j * fan_in + i] * delta[j]).sum();
                    back * (1.0 - x[i] * x[i])
                })
                .collect();
        }
    }
}
