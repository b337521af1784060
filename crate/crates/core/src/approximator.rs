//! Fully connected Q-network with rectified hidden layers.
//!
//! Parameters live in one flat vector, layer by layer, each layer storing its
//! row-major weight matrix (outputs x inputs) followed by its biases. The
//! optimizer and the finite-difference check operate on that flat view.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math;

/// Current weight-file schema version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MlpError {
    #[error("input has dimension {got}, network expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("action index {action} outside {outputs} outputs")]
    Action { action: usize, outputs: usize },
    #[error("network needs at least an input and an output layer, all non-empty")]
    Layout,
    #[error("unsupported weight-file schema {0}")]
    Schema(u32),
    #[error("layer {layer}: expected {expected} values in {what}, found {got}")]
    Size { layer: usize, what: &'static str, expected: usize, got: usize },
    #[error("parameter is not finite")]
    NonFinite,
    #[error("empty training batch")]
    EmptyBatch,
    #[error("training diverged: loss {0}")]
    Divergence(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Zero-initialized network with the given layer sizes.
    pub fn zeros(sizes: &[usize]) -> Result<Self, MlpError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(MlpError::Layout);
        }
        Ok(Self { sizes: sizes.to_vec(), params: alloc::vec![0.0; param_count(sizes)] })
    }

    /// He-style uniform initialization: weights on `±sqrt(6 / fan_in)`, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self, MlpError> {
        let mut net = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = math::sqrt(6.0 / fan_in as f64);
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated layout")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, x: &[f64]) -> Result<(), MlpError> {
        if x.len() != self.input_dim() {
            return Err(MlpError::Dimension { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Q-values for input `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        self.check_input(x)?;
        let mut acts = Vec::new();
        self.forward_cached(x, &mut acts);
        Ok(acts.pop().expect("output layer"))
    }

    /// Like [`Mlp::forward`] but reuses the buffers in `scratch`.
    pub fn predict<'s>(&self, x: &[f64], scratch: &'s mut Scratch) -> Result<&'s [f64], MlpError> {
        self.check_input(x)?;
        self.forward_cached(x, &mut scratch.acts);
        Ok(scratch.acts.last().expect("output layer"))
    }

    /// Forward pass keeping every layer's output; `acts[l]` is the output of layer `l`.
    fn forward_cached(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        let layers = self.sizes.len() - 1;
        acts.resize_with(layers, Vec::new);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (done, rest) = acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &done[l - 1] };
            let out = &mut rest[0];
            out.resize(n_out, 0.0);
            let (w, b) = self.params[off..off + n_in * n_out + n_out].split_at(n_in * n_out);
            let hidden = l + 1 < layers;
            for ((o, row), bias) in out.iter_mut().zip(w.chunks_exact(n_in)).zip(b) {
                let z = bias + dot(row, input);
                *o = if hidden { z.max(0.0) } else { z };
            }
            off += n_in * n_out + n_out;
        }
    }

    /// Squared error `(Q(x)[action] - target)^2`; adds `scale` times its
    /// gradient into `grad`.
    fn accumulate_gradient(
        &self,
        x: &[f64],
        action: usize,
        target: f64,
        scale: f64,
        grad: &mut [f64],
        scratch: &mut Scratch,
    ) -> f64 {
        self.forward_cached(x, &mut scratch.acts);
        let layers = self.sizes.len() - 1;
        let q = scratch.acts[layers - 1][action];
        let err = q - target;

        let delta = &mut scratch.delta;
        delta.clear();
        delta.resize(self.output_dim(), 0.0);
        delta[action] = 2.0 * err * scale;

        let mut off = self.params.len();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            let input: &[f64] = if l == 0 { x } else { &scratch.acts[l - 1] };
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let prev = &mut scratch.delta_prev;
                prev.clear();
                prev.resize(n_in, 0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
                for (p, h) in prev.iter_mut().zip(input) {
                    if *h <= 0.0 {
                        *p = 0.0;
                    }
                }
                core::mem::swap(delta, prev);
            }
        }
        err * err
    }

    /// Serializable form.
    pub fn to_file(&self) -> MlpFile {
        let mut layers = Vec::with_capacity(self.sizes.len() - 1);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let nw = w[0] * w[1];
            layers.push(LayerFile {
                weights: self.params[off..off + nw].to_vec(),
                biases: self.params[off + nw..off + nw + w[1]].to_vec(),
            });
            off += nw + w[1];
        }
        MlpFile { schema: SCHEMA_VERSION, sizes: self.sizes.clone(), layers }
    }

    pub fn from_file(file: &MlpFile) -> Result<Self, MlpError> {
        if file.schema != SCHEMA_VERSION {
            return Err(MlpError::Schema(file.schema));
        }
        let mut net = Self::zeros(&file.sizes)?;
        if file.layers.len() != file.sizes.len() - 1 {
            return Err(MlpError::Size {
                layer: file.layers.len(),
                what: "layer list",
                expected: file.sizes.len() - 1,
                got: file.layers.len(),
            });
        }
        let mut params = Vec::with_capacity(net.params.len());
        for (l, (layer, w)) in file.layers.iter().zip(file.sizes.windows(2)).enumerate() {
            if layer.weights.len() != w[0] * w[1] {
                return Err(MlpError::Size { layer: l, what: "weights", expected: w[0] * w[1], got: layer.weights.len() });
            }
            if layer.biases.len() != w[1] {
                return Err(MlpError::Size { layer: l, what: "biases", expected: w[1], got: layer.biases.len() });
            }
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.biases);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(MlpError::NonFinite);
        }
        net.params = params;
        Ok(net)
    }
}

/// Dot product with eight independent partial sums so the adds pipeline.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[f64; 8] = x.try_into().expect("chunk of eight");
        let y: &[f64; 8] = y.try_into().expect("chunk of eight");
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    for (i, (x, y)) in ra.iter().zip(rb).enumerate() {
        acc[i] += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Reusable buffers for backpropagation.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    grad: Vec<f64>,
}

/// Weight file: layer sizes plus row-major weights and biases per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFile {
    pub schema: u32,
    pub sizes: Vec<usize>,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self { config, m: alloc::vec![0.0; num_params], v: alloc::vec![0.0; num_params], step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - math::pow(beta1, t);
        let c2 = 1.0 - math::pow(beta2, t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (math::sqrt(v_hat) + epsilon);
        }
    }
}

/// One regression sample: move `Q(x)[action]` toward `target`.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub action: usize,
    pub target: f64,
}

/// Mean squared error over the selected outputs followed by one optimizer
/// step. Returns the loss before the step. A non-finite loss leaves the
/// network untouched.
pub fn train_batch(
    net: &mut Mlp,
    opt: &mut Adam,
    batch: &[Sample<'_>],
    scratch: &mut Scratch,
) -> Result<f64, MlpError> {
    if batch.is_empty() {
        return Err(MlpError::EmptyBatch);
    }
    for s in batch {
        net.check_input(s.x)?;
        if s.action >= net.output_dim() {
            return Err(MlpError::Action { action: s.action, outputs: net.output_dim() });
        }
    }
    let mut grad = core::mem::take(&mut scratch.grad);
    grad.clear();
    grad.resize(net.num_params(), 0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        loss += net.accumulate_gradient(s.x, s.action, s.target, scale, &mut grad, scratch);
    }
    loss *= scale;
    if !loss.is_finite() {
        scratch.grad = grad;
        return Err(MlpError::Divergence(loss));
    }
    opt.apply(&mut net.params, &grad);
    scratch.grad = grad;
    Ok(loss)
}

/// Analytic gradient of the single-sample squared error.
pub fn gradient(net: &Mlp, x: &[f64], action: usize, target: f64) -> Result<Vec<f64>, MlpError> {
    net.check_input(x)?;
    if action >= net.output_dim() {
        return Err(MlpError::Action { action, outputs: net.output_dim() });
    }
    let mut grad = alloc::vec![0.0; net.num_params()];
    net.accumulate_gradient(x, action, target, 1.0, &mut grad, &mut Scratch::default());
    Ok(grad)
}

fn sample_loss(net: &Mlp, x: &[f64], action: usize, target: f64) -> f64 {
    let q = net.forward(x).expect("checked input")[action];
    (q - target) * (q - target)
}

/// Finite-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;

/// Compares analytic gradients with central differences on a seeded random
/// 1% sample of parameters (at least one) and returns the largest relative
/// error `|a - n| / max(|a| + |n|, 1e-5)`.
pub fn gradient_check(net: &Mlp, x: &[f64], action: usize, target: f64, seed: u64) -> Result<f64, MlpError> {
    let analytic = gradient(net, x, action, target)?;
    let n = net.num_params();
    let count = n.div_ceil(100).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, n, count);
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in picks.iter() {
        let orig = probe.params[i];
        probe.params[i] = orig + FD_STEP;
        let plus = sample_loss(&probe, x, action, target);
        probe.params[i] = orig - FD_STEP;
        let minus = sample_loss(&probe, x, action, target);
        probe.params[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-5);
        worst = worst.max(rel);
    }
    Ok(worst)
}
