//! Small dense MLP with exact backpropagation, SGD/Adam, Huber loss and a
//! forward-mode input jet (value, gradient, Hessian) used by the trainable
//! dictionary.
//!
//! Layout: inputs are batch rows, `z = a W + b` with `W` stored `in × out`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Weights and biases, one entry per layer. Also used for gradients and
/// optimizer moments, which share the shape of the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        Params {
            weights: other.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: other.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.weights.len() == other.weights.len()
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.shape() == b.shape())
            && self.biases.iter().zip(&other.biases).all(|(a, b)| a.len() == b.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flat_map(|w| w.iter()).chain(self.biases.iter().flat_map(|b| b.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .flat_map(|w| w.iter_mut())
            .chain(self.biases.iter_mut().flat_map(|b| b.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::shape(format!("{} parameters", self.len()), format!("{}", flat.len())));
        }
        for (p, v) in self.iter_mut().zip(flat) {
            *p = *v;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Params) {
        for (p, o) in self.iter_mut().zip(other.iter()) {
            *p += alpha * o;
        }
    }

    /// Order-sensitive hash of the parameter bits.
    pub fn bit_hash(&self) -> u64 {
        // FNV-1a over the IEEE bit patterns.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.iter() {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Clone, Debug)]
struct Cache {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    activation: Activation,
    params: Params,
    cache: Option<Cache>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes && self.activation == other.activation && self.params == other.params
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "layer sizes need at least two positive entries, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit)));
            biases.push(DVector::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params: Params { weights, biases },
            cache: None,
        })
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let weights = layer_sizes.windows(2).map(|p| DMatrix::zeros(p[0], p[1])).collect();
        let biases = layer_sizes[1..].iter().map(|&n| DVector::zeros(n)).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params: Params { weights, biases },
            cache: None,
        })
    }

    pub fn from_params(layer_sizes: &[usize], activation: Activation, params: Params) -> Result<Self> {
        let template = Mlp::zeros(layer_sizes, activation)?;
        if !template.params.same_shape(&params) {
            return Err(Error::ArchitectureMismatch(format!(
                "parameters do not match layer sizes {layer_sizes:?}"
            )));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params,
            cache: None,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Replace parameters; invalidates any cached forward pass.
    pub fn set_params(&mut self, params: Params) -> Result<()> {
        if !self.params.same_shape(&params) {
            return Err(Error::ArchitectureMismatch("parameter shapes differ".into()));
        }
        self.params = params;
        self.cache = None;
        Ok(())
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_sizes == other.layer_sizes && self.activation == other.activation
    }

    fn check_input(&self, input: &DMatrix<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("input width {}", self.input_dim()),
                format!("{}", input.ncols()),
            ));
        }
        Ok(())
    }

    fn layer(&self, l: usize, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = a * &self.params.weights[l];
        let b = &self.params.biases[l];
        for mut row in z.row_iter_mut() {
            for (v, bj) in row.iter_mut().zip(b.iter()) {
                *v += bj;
            }
        }
        if l + 1 < self.n_layers() {
            z.apply(|v| *v = self.activation.apply(*v));
        }
        z
    }

    pub fn forward(&self, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(input)?;
        let mut a = input.clone();
        for l in 0..self.n_layers() {
            a = self.layer(l, &a);
        }
        Ok(a)
    }

    /// Smallest `|z|` over all hidden pre-activations for `input`. Finite
    /// differences are only meaningful for ReLU when this exceeds the step.
    pub fn min_hidden_preactivation(&self, input: &DMatrix<f64>) -> Result<f64> {
        self.check_input(input)?;
        let mut a = input.clone();
        let mut margin = f64::INFINITY;
        for l in 0..self.n_layers() - 1 {
            let mut z = &a * &self.params.weights[l];
            for mut row in z.row_iter_mut() {
                for (v, bj) in row.iter_mut().zip(self.params.biases[l].iter()) {
                    *v += bj;
                }
            }
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            z.apply(|v| *v = self.activation.apply(*v));
            a = z;
        }
        Ok(margin)
    }

    /// Single-row convenience wrapper.
    pub fn forward_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let input = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.forward(&input)?.iter().copied().collect())
    }

    /// Forward pass that records activations for a subsequent `backward`.
    pub fn forward_train(&mut self, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.n_layers() + 1);
        activations.push(input.clone());
        for l in 0..self.n_layers() {
            let next = self.layer(l, activations.last().unwrap());
            activations.push(next);
        }
        let out = activations.last().unwrap().clone();
        self.cache = Some(Cache { activations });
        Ok(out)
    }

    /// Gradients of a scalar loss with respect to every parameter, given
    /// `∂loss/∂output` for the cached batch.
    pub fn backward(&self, loss_grad: &DMatrix<f64>) -> Result<Params> {
        let cache = self.cache.as_ref().ok_or(Error::StaleCache)?;
        let batch = cache.activations[0].nrows();
        if loss_grad.shape() != (batch, self.output_dim()) {
            if loss_grad.nrows() != batch {
                return Err(Error::StaleCache);
            }
            return Err(Error::shape(
                format!("loss gradient {:?}", (batch, self.output_dim())),
                format!("{:?}", loss_grad.shape()),
            ));
        }
        let mut grads = Params::zeros_like(&self.params);
        let mut delta = loss_grad.clone();
        for l in (0..self.n_layers()).rev() {
            let a_in = &cache.activations[l];
            grads.weights[l] = a_in.transpose() * &delta;
            grads.biases[l] = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            if l > 0 {
                let mut next = &delta * self.params.weights[l].transpose();
                for (v, a) in next.iter_mut().zip(a_in.iter()) {
                    *v *= self.activation.derivative_from_output(*a);
                }
                delta = next;
            }
        }
        Ok(grads)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Output values, input Jacobian (`out × d`) and per-output input Hessians
    /// at a single point, by forward-mode propagation through the layers.
    pub fn input_jet(&self, x: &[f64]) -> Result<InputJet> {
        let d = self.input_dim();
        if x.len() != d {
            return Err(Error::shape(format!("point of length {d}"), format!("{}", x.len())));
        }
        let mut a = DVector::from_column_slice(x);
        let mut jac = DMatrix::<f64>::identity(d, d);
        // Hessians stored flat: row j, column p·d + q.
        let mut hess = DMatrix::<f64>::zeros(d, d * d);
        for l in 0..self.n_layers() {
            let wt = self.params.weights[l].transpose();
            let mut z = &wt * &a;
            z += &self.params.biases[l];
            let jz = &wt * &jac;
            let hz = &wt * &hess;
            if l + 1 == self.n_layers() {
                a = z;
                jac = jz;
                hess = hz;
                break;
            }
            let width = z.len();
            let mut ja = jz.clone();
            let mut ha = hz.clone();
            for j in 0..width {
                match self.activation {
                    Activation::Tanh => {
                        let t = z[j].tanh();
                        let s = 1.0 - t * t;
                        for p in 0..d {
                            ja[(j, p)] = s * jz[(j, p)];
                        }
                        for p in 0..d {
                            for q in 0..d {
                                ha[(j, p * d + q)] = s * hz[(j, p * d + q)] - 2.0 * t * s * jz[(j, p)] * jz[(j, q)];
                            }
                        }
                        z[j] = t;
                    }
                    Activation::Relu => {
                        if z[j] <= 0.0 {
                            z[j] = 0.0;
                            ja.row_mut(j).fill(0.0);
                            ha.row_mut(j).fill(0.0);
                        }
                    }
                }
            }
            a = z;
            jac = ja;
            hess = ha;
        }
        Ok(InputJet {
            value: a.iter().copied().collect(),
            jacobian: jac,
            hessian_flat: hess,
            dim: d,
        })
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint {
            version: CHECKPOINT_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            activation: self.activation,
            weights: self
                .params
                .weights
                .iter()
                .map(|w| {
                    let mut flat = Vec::with_capacity(w.len());
                    for r in 0..w.nrows() {
                        flat.extend(w.row(r).iter());
                    }
                    flat
                })
                .collect(),
            biases: self.params.biases.iter().map(|b| b.iter().copied().collect()).collect(),
        }
    }

    pub fn from_checkpoint(ck: &MlpCheckpoint) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported network checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        validate_sizes(&ck.layer_sizes)?;
        if ck.weights.len() != ck.layer_sizes.len() - 1 || ck.biases.len() != ck.layer_sizes.len() - 1 {
            return Err(Error::ArchitectureMismatch("layer count differs from header".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in ck.layer_sizes.windows(2).enumerate() {
            if ck.weights[l].len() != pair[0] * pair[1] || ck.biases[l].len() != pair[1] {
                return Err(Error::ArchitectureMismatch(format!("layer {l} has wrong parameter count")));
            }
            weights.push(DMatrix::from_row_slice(pair[0], pair[1], &ck.weights[l]));
            biases.push(DVector::from_column_slice(&ck.biases[l]));
        }
        Mlp::from_params(&ck.layer_sizes, ck.activation, Params { weights, biases })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: MlpCheckpoint = serde_json::from_str(&text)?;
        Mlp::from_checkpoint(&ck)
    }
}

/// Network checkpoint: architecture header plus row-major weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpCheckpoint {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Second-order jet of a network output with respect to its input.
#[derive(Clone, Debug)]
pub struct InputJet {
    pub value: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub hessian_flat: DMatrix<f64>,
    dim: usize,
}

impl InputJet {
    /// `∂²out_j / ∂x_p ∂x_q`.
    pub fn hessian(&self, j: usize, p: usize, q: usize) -> f64 {
        self.hessian_flat[(j, p * self.dim + q)]
    }
}

/// Mean Huber loss and its gradient with respect to `pred`.
pub fn huber_loss(pred: &[f64], target: &[f64], delta: f64) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!("{}", pred.len()), format!("{}", target.len())));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("huber delta must be positive, got {delta}")));
    }
    if pred.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let e = p - t;
        if e.abs() <= delta {
            loss += 0.5 * e * e;
        } else {
            loss += delta * (e.abs() - 0.5 * delta);
        }
        grad.push(e.clamp(-delta, delta) / n);
    }
    Ok((loss / n, grad))
}

/// Elementwise clamp to `[-max_abs, max_abs]`.
pub fn clip_gradients(grads: &mut Params, max_abs: f64) {
    for g in grads.iter_mut() {
        *g = g.clamp(-max_abs, max_abs);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Option<Params>,
    v: Option<Params>,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: None,
            v: None,
        }
    }

    /// Adam moments, if any step has been taken.
    pub fn moments(&self) -> Option<(&Params, &Params)> {
        Some((self.m.as_ref()?, self.v.as_ref()?))
    }

    pub fn set_moments(&mut self, m: Params, v: Params, step: u64) {
        self.m = Some(m);
        self.v = Some(v);
        self.step = step;
    }

    pub fn snapshot(&self) -> OptimizerSnapshot {
        OptimizerSnapshot {
            kind: self.kind,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            step: self.step,
            m: self.m.as_ref().map(Params::to_flat),
            v: self.v.as_ref().map(Params::to_flat),
        }
    }

    /// Rebuild from a snapshot; `shape` supplies the parameter layout.
    pub fn from_snapshot(snap: &OptimizerSnapshot, shape: &Params) -> Result<Self> {
        let unflatten = |flat: &Option<Vec<f64>>| -> Result<Option<Params>> {
            flat.as_ref()
                .map(|f| {
                    let mut p = Params::zeros_like(shape);
                    p.set_flat(f)?;
                    Ok(p)
                })
                .transpose()
        };
        Ok(Self {
            kind: snap.kind,
            learning_rate: snap.learning_rate,
            beta1: snap.beta1,
            beta2: snap.beta2,
            eps: snap.eps,
            step: snap.step,
            m: unflatten(&snap.m)?,
            v: unflatten(&snap.v)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSnapshot {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
}

/// Apply one optimizer step. On a non-finite result the network is left
/// untouched and `NonFiniteUpdate` is returned.
pub fn optimizer_step(net: &mut Mlp, grads: &Params, state: &mut OptimizerState) -> Result<()> {
    if !net.params.same_shape(grads) {
        return Err(Error::ArchitectureMismatch("gradient shapes differ from parameters".into()));
    }
    let mut next = net.params.clone();
    match state.kind {
        OptimizerKind::Sgd => next.add_scaled(-state.learning_rate, grads),
        OptimizerKind::Adam => {
            let mut m = state.m.clone().unwrap_or_else(|| Params::zeros_like(grads));
            let mut v = state.v.clone().unwrap_or_else(|| Params::zeros_like(grads));
            let t = state.step + 1;
            let (b1, b2) = (state.beta1, state.beta2);
            let c1 = 1.0 - b1.powi(t as i32);
            let c2 = 1.0 - b2.powi(t as i32);
            for (((p, g), mi), vi) in next.iter_mut().zip(grads.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.eps);
            }
            if !next.all_finite() {
                return Err(Error::NonFiniteUpdate("adam step".into()));
            }
            state.m = Some(m);
            state.v = Some(v);
            state.step = t;
        }
    }
    if !next.all_finite() {
        return Err(Error::NonFiniteUpdate("sgd step".into()));
    }
    if state.kind == OptimizerKind::Sgd {
        state.step += 1;
    }
    net.params = next;
    net.cache = None;
    Ok(())
}

/// `target ← τ·source + (1 − τ)·target`.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidInput(format!("soft-update tau must lie in (0, 1], got {tau}")));
    }
    if !target.same_architecture(source) {
        return Err(Error::ArchitectureMismatch(format!(
            "{:?}/{:?} vs {:?}/{:?}",
            target.layer_sizes, target.activation, source.layer_sizes, source.activation
        )));
    }
    for (t, s) in target.params.iter_mut().zip(source.params.iter()) {
        *t = tau * s + (1.0 - tau) * *t;
    }
    target.cache = None;
    Ok(())
}

/// Relative error as used by all derivative checks: `|a − b| / (1 + |a|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (1.0 + analytic.abs())
}

/// Backprop versus central finite differences on the loss `Σ c ⊙ net(x)`
/// for a random probe `c`. Returns the maximum relative error.
pub fn gradient_check<R: Rng + ?Sized>(net: &Mlp, input: &DMatrix<f64>, step: f64, rng: &mut R) -> Result<f64> {
    let mut work = net.clone();
    let out = work.forward_train(input)?;
    let probe = DMatrix::from_fn(out.nrows(), out.ncols(), |_, _| rng.random_range(-1.0..1.0));
    let grads = work.backward(&probe)?;
    let analytic = grads.to_flat();

    let base = net.params.to_flat();
    let loss = |flat: &[f64]| -> Result<f64> {
        let mut p = net.params.clone();
        p.set_flat(flat)?;
        let m = Mlp::from_params(&net.layer_sizes, net.activation, p)?;
        Ok(m.forward(input)?.component_mul(&probe).sum())
    };
    let mut worst = 0.0f64;
    let mut flat = base.clone();
    for i in 0..base.len() {
        flat[i] = base[i] + step;
        let up = loss(&flat)?;
        flat[i] = base[i] - step;
        let down = loss(&flat)?;
        flat[i] = base[i];
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}
