use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>) -> Result<Self> {
        let arch = MlpArchitecture { input_dim, hidden_sizes };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("architecture", "input dimension must be positive"));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::invalid("architecture", "hidden sizes must be a nonempty list of positive sizes"));
        }
        Ok(())
    }

    /// Layer widths from input to the scalar output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_sizes);
        dims.push(1);
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Dense layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// `z = a W^T + b` for a row-major batch `a` of `rows x inputs`.
    fn apply(&self, a: &[f64], rows: usize, z: &mut Vec<f64>) {
        z.clear();
        z.reserve(rows * self.outputs);
        for x in a.chunks_exact(self.inputs).take(rows) {
            for (w, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
                z.push(dot(w, x) + b);
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Multi-layer perceptron with relu hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub arch: MlpArchitecture,
    pub layers: Vec<Layer>,
}

pub type Gradients = Vec<Layer>;

impl Mlp {
    pub fn zeros(arch: &MlpArchitecture) -> Result<Self> {
        arch.validate()?;
        let layers = arch.dims().windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Mlp { arch: arch.clone(), layers })
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(arch: &MlpArchitecture, rng: &mut impl Rng) -> Result<Self> {
        let mut mlp = Mlp::zeros(arch)?;
        for layer in &mut mlp.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(mlp)
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let dims = self.arch.dims();
        if self.layers.len() != dims.len() - 1 {
            return Err(Error::ModelMismatch(format!(
                "{} layers for {} hidden sizes",
                self.layers.len(),
                self.arch.hidden_sizes.len()
            )));
        }
        for (layer, w) in self.layers.iter().zip(dims.windows(2)) {
            if layer.inputs != w[0]
                || layer.outputs != w[1]
                || layer.weights.len() != w[0] * w[1]
                || layer.bias.len() != w[1]
            {
                return Err(Error::ModelMismatch("layer shapes do not chain".into()));
            }
            if !layer.weights.iter().chain(&layer.bias).all(|v| v.is_finite()) {
                return Err(Error::ModelMismatch("non-finite weight".into()));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    /// Applies the log transform, then the network. Features must be positive.
    pub fn forward(&self, features: &[f64]) -> f64 {
        assert_eq!(features.len(), self.input_dim(), "feature length");
        debug_assert!(features.iter().all(|f| *f > 0.0), "features must be positive");
        let logs: Vec<f64> = features.iter().map(|f| f.ln()).collect();
        self.forward_transformed(&logs, 1)[0]
    }

    /// Runs the network on a batch of already transformed inputs.
    pub fn forward_transformed(&self, inputs: &[f64], rows: usize) -> Vec<f64> {
        let mut a = inputs[..rows * self.input_dim()].to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, rows, &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut a, &mut z);
        }
        a
    }

    /// Mean squared error of the batch and its exact gradient with respect to
    /// every weight and bias. `inputs` are already transformed.
    pub fn backward(&self, inputs: &[f64], targets: &[f64]) -> (f64, Gradients) {
        let rows = targets.len();
        assert!(rows > 0, "empty batch");
        let mut activations = vec![inputs[..rows * self.input_dim()].to_vec()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(activations.last().expect("input"), rows, &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(z);
        }

        let output = activations.last().expect("output");
        let mut loss = 0.0;
        let mut delta: Vec<f64> = output
            .iter()
            .zip(targets)
            .map(|(y_hat, y)| {
                let e = y_hat - y;
                loss += e * e;
                2.0 * e / rows as f64
            })
            .collect();
        loss /= rows as f64;

        let mut grads: Gradients = self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let a_prev = &activations[i];
            let grad = &mut grads[i];
            for (d_row, a_row) in delta.chunks_exact(layer.outputs).zip(a_prev.chunks_exact(layer.inputs)) {
                for (o, d) in d_row.iter().enumerate() {
                    if *d != 0.0 {
                        axpy(*d, a_row, &mut grad.weights[o * layer.inputs..(o + 1) * layer.inputs]);
                        grad.bias[o] += d;
                    }
                }
            }
            if i == 0 {
                break;
            }
            let mut prev = vec![0.0; rows * layer.inputs];
            for ((p_row, d_row), a_row) in prev
                .chunks_exact_mut(layer.inputs)
                .zip(delta.chunks_exact(layer.outputs))
                .zip(a_prev.chunks_exact(layer.inputs))
            {
                for (o, d) in d_row.iter().enumerate() {
                    if *d != 0.0 {
                        axpy(*d, &layer.weights[o * layer.inputs..(o + 1) * layer.inputs], p_row);
                    }
                }
                // relu'(z) is 1 exactly where the stored activation is positive
                for (p, a) in p_row.iter_mut().zip(a_row) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        (loss, grads)
    }

    pub fn mse_transformed(&self, inputs: &[f64], targets: &[f64]) -> f64 {
        let out = self.forward_transformed(inputs, targets.len());
        out.iter().zip(targets).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / targets.len() as f64
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }
}

pub(crate) fn flat_gradients(grads: &Gradients) -> impl Iterator<Item = &f64> {
    grads.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
}
