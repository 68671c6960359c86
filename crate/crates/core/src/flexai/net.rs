//! Fully connected network with rectifier hidden layers and a linear output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major, `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.len().checked_div(self.biases.len()).unwrap_or(0)
    }

    pub fn outputs(&self) -> usize {
        self.biases.len()
    }

    fn zeros_like(&self) -> Layer {
        Layer {
            weights: vec![0.0; self.weights.len()],
            biases: vec![0.0; self.biases.len()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Layer>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Activations of every layer for a batch, kept for backpropagation.
/// `acts[0]` is the input; `acts[l]` is the post-activation output of layer
/// `l - 1`. Each entry is `batch × width`, row-major.
pub struct Activations {
    pub batch: usize,
    pub acts: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl QNetwork {
    /// Uniform initialisation in ±1/√fan_in.
    pub fn new<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::ShapeMismatch(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    weights: (0..w[0] * w[1]).map(|_| rng.gen_range(-bound..bound)).collect(),
                    biases: (0..w[1]).map(|_| rng.gen_range(-bound..bound)).collect(),
                }
            })
            .collect();
        Ok(QNetwork {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Self {
        QNetwork {
            layer_sizes: layer_sizes.to_vec(),
            layers: layer_sizes
                .windows(2)
                .map(|w| Layer {
                    weights: vec![0.0; w[0] * w[1]],
                    biases: vec![0.0; w[1]],
                })
                .collect(),
        }
    }

    pub fn input_len(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.layer_sizes.last().unwrap_or(&0)
    }

    /// Check that stored parameters agree with `layer_sizes`.
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layers.len() != self.layer_sizes.len() - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} layers for sizes {:?}",
                self.layers.len(),
                self.layer_sizes
            )));
        }
        for (l, (layer, w)) in self.layers.iter().zip(self.layer_sizes.windows(2)).enumerate() {
            if layer.weights.len() != w[0] * w[1] || layer.biases.len() != w[1] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: expected {}x{}, got {} weights and {} biases",
                    w[1],
                    w[0],
                    layer.weights.len(),
                    layer.biases.len()
                )));
            }
            if layer.weights.iter().chain(&layer.biases).any(|x| !x.is_finite()) {
                return Err(Error::ShapeMismatch(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "input of length {} for a network expecting {}",
                input.len(),
                self.input_len()
            )));
        }
        Ok(self.forward_batch(input, 1).acts.pop().unwrap_or_default())
    }

    /// Forward pass over `batch` inputs laid out row-major.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Activations {
        debug_assert_eq!(input.len(), batch * self.input_len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (layer.inputs(), layer.outputs());
            let x = &acts[l];
            let mut y = vec![0.0; batch * n_out];
            for b in 0..batch {
                let xb = &x[b * n_in..(b + 1) * n_in];
                let yb = &mut y[b * n_out..(b + 1) * n_out];
                for (o, out) in yb.iter_mut().enumerate() {
                    let v = layer.biases[o] + dot(&layer.weights[o * n_in..(o + 1) * n_in], xb);
                    *out = if l < last { v.max(0.0) } else { v };
                }
            }
            acts.push(y);
        }
        Activations { batch, acts }
    }

    /// Gradients of `Σ_b Σ_o d_out[b,o] · out[b,o]` with respect to every
    /// parameter, given the cached activations.
    pub fn backward(&self, cache: &Activations, d_out: &[f64]) -> Vec<Layer> {
        let batch = cache.batch;
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        let mut delta = d_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (n_in, n_out) = (layer.inputs(), layer.outputs());
            let x = &cache.acts[l];
            let g = &mut grads[l];
            for b in 0..batch {
                let xb = &x[b * n_in..(b + 1) * n_in];
                for o in 0..n_out {
                    let d = delta[b * n_out + o];
                    if d != 0.0 {
                        g.biases[o] += d;
                        axpy(d, xb, &mut g.weights[o * n_in..(o + 1) * n_in]);
                    }
                }
            }
            if l == 0 {
                break;
            }
            // propagate through the weights and the previous rectifier
            let mut prev = vec![0.0; batch * n_in];
            for b in 0..batch {
                let pb = &mut prev[b * n_in..(b + 1) * n_in];
                for o in 0..n_out {
                    let d = delta[b * n_out + o];
                    if d != 0.0 {
                        axpy(d, &layer.weights[o * n_in..(o + 1) * n_in], pb);
                    }
                }
                for (p, &a) in pb.iter_mut().zip(&x[b * n_in..(b + 1) * n_in]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        grads
    }

    /// `θ ← θ − lr · g`.
    pub fn sgd_step(&mut self, grads: &[Layer], lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            axpy(-lr, &g.weights, &mut layer.weights);
            axpy(-lr, &g.biases, &mut layer.biases);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Mutable access to parameter `k` in layer order (weights, then biases).
    pub fn parameter_mut(&mut self, mut k: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if k < layer.weights.len() {
                return &mut layer.weights[k];
            }
            k -= layer.weights.len();
            if k < layer.biases.len() {
                return &mut layer.biases[k];
            }
            k -= layer.biases.len();
        }
        panic!("parameter index out of range")
    }
}

/// Flatten gradients in the same order as [`QNetwork::parameter_mut`].
pub fn flatten(grads: &[Layer]) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
        .collect()
}
