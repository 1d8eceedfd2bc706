//! Critic MLP over the concatenated encoded row: tanh hidden layers, one
//! linear output score. The raw score is the critic value; the standard-loss
//! mode applies its logistic link inside the loss, not here.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::optim::FlatParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorParams {
    /// Layers chained input → hidden… → scalar output.
    pub layers: Vec<DenseLayer>,
}

/// Layer inputs captured during a forward pass.
pub struct DiscCache {
    inputs: Vec<Array2<f64>>,
}

impl DiscriminatorParams {
    /// Builds `input_dim → hidden… → 1` with uniform `±1/√fan_in` weights.
    pub fn new(input_dim: usize, hidden: &[usize], rng: &mut ChaCha20Rng) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let a = 1.0 / (fan_in as f64).sqrt();
                DenseLayer {
                    w: Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-a..a)),
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        DiscriminatorParams { layers }
    }

    pub fn zeros_like(&self) -> Self {
        DiscriminatorParams {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    /// Raw scores for a batch of encoded rows.
    pub fn forward(&self, x: &Array2<f64>) -> (Array1<f64>, DiscCache) {
        assert_eq!(x.ncols(), self.input_dim(), "row width must match the input layer");
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            inputs.push(a.clone());
            let mut pre = a.dot(&layer.w.t());
            pre += &layer.b;
            a = if idx + 1 < self.layers.len() { pre.mapv(f64::tanh) } else { pre };
        }
        (a.column(0).to_owned(), DiscCache { inputs })
    }

    /// Convenience single-row score.
    pub fn score_one(&self, x: &[f64]) -> f64 {
        let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        self.forward(&row).0[0]
    }

    /// Gradients for the weights plus the gradient flowing back into the
    /// input rows (consumed by the generator update).
    pub fn backward(
        &self,
        cache: &DiscCache,
        dscore: &Array1<f64>,
    ) -> (DiscriminatorParams, Array2<f64>) {
        let mut grads = self.zeros_like();
        let mut delta = dscore.clone().insert_axis(Axis(1));
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[idx];
            grads.layers[idx].w += &delta.t().dot(input);
            grads.layers[idx].b += &delta.sum_axis(Axis(0));
            let mut dx = delta.dot(&layer.w);
            if idx > 0 {
                // The input of this layer is the tanh output of the previous.
                dx = &dx * &input.mapv(|v| 1.0 - v * v);
            }
            delta = dx;
        }
        (grads, delta)
    }
}

impl FlatParams for DiscriminatorParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            out.push(layer.w.as_slice().unwrap());
            out.push(layer.b.as_slice().unwrap());
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            out.push(layer.w.as_slice_mut().unwrap());
            out.push(layer.b.as_slice_mut().unwrap());
        }
        out
    }
}
