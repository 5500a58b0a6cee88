//! Benchmark stochastic systems `dX = b(X) dt + σ(X) dW` and trajectory
//! generation by fixed-step Euler–Maruyama.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidInput(format!(
                "domain bounds must be non-empty and of equal length ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "domain requires finite lower < upper on every axis, got {lower:?} / {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn diagonal(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Lebesgue volume.
    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }
}

/// Built-in system families with their constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SystemKind {
    /// `dX = -∇V dt + diag(σ₁, σ₂) dW` with `V(x, y) = (x² - 1)² + y²`.
    DoubleWell { sigma1: f64, sigma2: f64 },
    /// Damped Duffing oscillator, noise on the velocity only.
    Duffing {
        delta: f64,
        alpha: f64,
        beta: f64,
        sigma: f64,
    },
    /// FitzHugh–Nagumo with independent noise on both variables.
    Fhn {
        epsilon: f64,
        a1: f64,
        a2: f64,
        sigma1: f64,
        sigma2: f64,
    },
    /// Isotropic Ornstein–Uhlenbeck `dX = -θX dt + σ dW` in `dim` dimensions.
    Ou { theta: f64, sigma: f64, dim: usize },
}

/// A stochastic system with its state-space box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeSystem {
    pub kind: SystemKind,
    pub domain: Domain,
}

const BUILTIN_NAMES: [&str; 4] = ["double_well", "duffing", "fhn", "ou"];

fn take_params(
    name: &str,
    params: &BTreeMap<String, f64>,
    defaults: &[(&str, f64)],
) -> Result<BTreeMap<String, f64>> {
    for key in params.keys() {
        if !defaults.iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!(
                "unknown parameter `{key}` for system `{name}` (allowed: {})",
                defaults.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
            )));
        }
    }
    let mut out = BTreeMap::new();
    for (k, v) in defaults {
        let value = params.get(*k).copied().unwrap_or(*v);
        if !value.is_finite() {
            return Err(Error::Config(format!("parameter `{k}` must be finite")));
        }
        out.insert((*k).to_string(), value);
    }
    Ok(out)
}

/// Default parameter table for a built-in system, as (name, value) pairs.
pub fn default_params(name: &str) -> Result<Vec<(&'static str, f64)>> {
    Ok(match name {
        "double_well" => vec![("sigma1", 1.09), ("sigma2", 1.09)],
        "duffing" => vec![("delta", 0.5), ("alpha", -1.0), ("beta", 1.0), ("sigma", 0.15)],
        "fhn" => vec![
            ("epsilon", 0.01),
            ("a1", 0.5),
            ("a2", 0.1),
            ("sigma1", 1e-3),
            ("sigma2", 1e-5),
        ],
        "ou" => vec![("theta", 1.0), ("sigma", std::f64::consts::SQRT_2), ("dim", 1.0)],
        other => {
            return Err(Error::Config(format!(
                "unknown system `{other}` (expected one of {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    })
}

/// Build a named benchmark system; missing parameters take their defaults.
pub fn builtin_system(name: &str, params: &BTreeMap<String, f64>) -> Result<SdeSystem> {
    let defaults = default_params(name)?;
    let p = take_params(name, params, &defaults)?;
    let system = match name {
        "double_well" => SdeSystem {
            kind: SystemKind::DoubleWell {
                sigma1: p["sigma1"],
                sigma2: p["sigma2"],
            },
            domain: Domain::new(vec![-3.0, -4.0], vec![3.0, 4.0])?,
        },
        "duffing" => SdeSystem {
            kind: SystemKind::Duffing {
                delta: p["delta"],
                alpha: p["alpha"],
                beta: p["beta"],
                sigma: p["sigma"],
            },
            domain: Domain::new(vec![-2.0, -2.0], vec![2.0, 2.0])?,
        },
        "fhn" => SdeSystem {
            kind: SystemKind::Fhn {
                epsilon: p["epsilon"],
                a1: p["a1"],
                a2: p["a2"],
                sigma1: p["sigma1"],
                sigma2: p["sigma2"],
            },
            domain: Domain::new(vec![-2.5, -1.5], vec![2.5, 1.5])?,
        },
        "ou" => {
            let dim = p["dim"];
            if dim < 1.0 || dim.fract() != 0.0 {
                return Err(Error::Config(format!("ou: `dim` must be a positive integer, got {dim}")));
            }
            let dim = dim as usize;
            SdeSystem {
                kind: SystemKind::Ou {
                    theta: p["theta"],
                    sigma: p["sigma"],
                    dim,
                },
                domain: Domain::new(vec![-4.0; dim], vec![4.0; dim])?,
            }
        }
        _ => unreachable!("validated by default_params"),
    };
    Ok(system)
}

impl SdeSystem {
    pub fn ou(theta: f64, sigma: f64) -> Self {
        SdeSystem {
            kind: SystemKind::Ou { theta, sigma, dim: 1 },
            domain: Domain {
                lower: vec![-4.0],
                upper: vec![4.0],
            },
        }
    }

    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        if domain.dim() != self.dim() {
            return Err(Error::shape(format!("domain of dim {}", self.dim()), format!("dim {}", domain.dim())));
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SystemKind::DoubleWell { .. } => "double_well",
            SystemKind::Duffing { .. } => "duffing",
            SystemKind::Fhn { .. } => "fhn",
            SystemKind::Ou { .. } => "ou",
        }
    }

    /// State dimension `d`.
    pub fn dim(&self) -> usize {
        match self.kind {
            SystemKind::Ou { dim, .. } => dim,
            _ => 2,
        }
    }

    /// Wiener-process dimension `m_w`.
    pub fn noise_dim(&self) -> usize {
        match self.kind {
            SystemKind::Duffing { .. } => 1,
            SystemKind::Ou { dim, .. } => dim,
            _ => 2,
        }
    }

    /// Writes `b(x)` into `out`.
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            SystemKind::DoubleWell { .. } => {
                out[0] = -4.0 * x[0] * (x[0] * x[0] - 1.0);
                out[1] = -2.0 * x[1];
            }
            SystemKind::Duffing { delta, alpha, beta, .. } => {
                out[0] = x[1];
                out[1] = -delta * x[1] - alpha * x[0] - beta * x[0].powi(3);
            }
            SystemKind::Fhn { epsilon, a1, a2, .. } => {
                out[0] = x[0] - x[0].powi(3) / 3.0 - x[1];
                out[1] = epsilon * (x[0] + a1 - a2 * x[1]);
            }
            SystemKind::Ou { theta, .. } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -theta * v;
                }
            }
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.drift_into(x, &mut out);
        out
    }

    /// `σ(x)` as a `d × m_w` matrix.
    pub fn diffusion(&self, _x: &[f64]) -> DMatrix<f64> {
        match self.kind {
            SystemKind::DoubleWell { sigma1, sigma2 } => {
                DMatrix::from_row_slice(2, 2, &[sigma1, 0.0, 0.0, sigma2])
            }
            SystemKind::Duffing { sigma, .. } => DMatrix::from_row_slice(2, 1, &[0.0, sigma]),
            SystemKind::Fhn { sigma1, sigma2, .. } => {
                DMatrix::from_row_slice(2, 2, &[sigma1, 0.0, 0.0, sigma2])
            }
            SystemKind::Ou { sigma, dim, .. } => DMatrix::identity(dim, dim) * sigma,
        }
    }

    /// `σσᵀ(x)`, the `d × d` diffusion tensor used by the generator.
    pub fn diffusion_tensor(&self, x: &[f64]) -> DMatrix<f64> {
        let s = self.diffusion(x);
        &s * s.transpose()
    }

    /// Whether `σ` is independent of the state (true for all built-ins).
    pub fn has_additive_noise(&self) -> bool {
        true
    }

    /// Known deterministic equilibria, for tests and diagnostics.
    pub fn equilibria(&self) -> Vec<Vec<f64>> {
        match self.kind {
            SystemKind::DoubleWell { .. } => vec![vec![-1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]],
            SystemKind::Duffing { alpha, beta, .. } => {
                let mut eq = vec![vec![0.0, 0.0]];
                if -alpha / beta > 0.0 {
                    let r = (-alpha / beta).sqrt();
                    eq.push(vec![-r, 0.0]);
                    eq.push(vec![r, 0.0]);
                }
                eq
            }
            SystemKind::Fhn { .. } => Vec::new(),
            SystemKind::Ou { dim, .. } => vec![vec![0.0; dim]],
        }
    }
}

/// Paired snapshots `(x_k, y_k)` with `y_k` one step of length `dt` after `x_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotData {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub dt: f64,
    pub seed: u64,
}

impl SnapshotData {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, dt: f64, seed: u64) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::shape(format!("{:?}", x.shape()), format!("{:?}", y.shape())));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("snapshot data needs at least one pair".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { x, y, dt, seed })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Stack several datasets sharing `dt`.
    pub fn concat(parts: &[&SnapshotData]) -> Result<SnapshotData> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("nothing to concatenate".into()))?;
        let d = first.dim();
        let m: usize = parts.iter().map(|p| p.len()).sum();
        let mut x = DMatrix::zeros(m, d);
        let mut y = DMatrix::zeros(m, d);
        let mut row = 0;
        for p in parts {
            if p.dim() != d {
                return Err(Error::shape(format!("dim {d}"), format!("dim {}", p.dim())));
            }
            x.rows_mut(row, p.len()).copy_from(&p.x);
            y.rows_mut(row, p.len()).copy_from(&p.y);
            row += p.len();
        }
        SnapshotData::new(x, y, first.dt, first.seed)
    }
}

/// One Euler–Maruyama step. `noise` is a standard normal draw of length
/// `m_w`; the `√dt` scaling is applied here.
pub fn euler_maruyama_step(system: &SdeSystem, state: &[f64], dt: f64, noise: &[f64]) -> Result<Vec<f64>> {
    let d = system.dim();
    if state.len() != d {
        return Err(Error::shape(format!("state of length {d}"), format!("{}", state.len())));
    }
    if noise.len() != system.noise_dim() {
        return Err(Error::shape(
            format!("noise of length {}", system.noise_dim()),
            format!("{}", noise.len()),
        ));
    }
    let mut next = vec![0.0; d];
    em_step_into(system, state, dt, noise, &mut next);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationDiverged { step: 0, state: state.to_vec() });
    }
    Ok(next)
}

fn em_step_into(system: &SdeSystem, state: &[f64], dt: f64, noise: &[f64], out: &mut [f64]) {
    system.drift_into(state, out);
    let sigma = system.diffusion(state);
    let sqrt_dt = dt.sqrt();
    for i in 0..state.len() {
        let mut diffusion = 0.0;
        for (j, n) in noise.iter().enumerate() {
            diffusion += sigma[(i, j)] * n;
        }
        out[i] = state[i] + out[i] * dt + diffusion * sqrt_dt;
    }
}

/// Integrate `n_steps` Euler–Maruyama steps from `x0`. Row `k` of `y` is the
/// successor of row `k` of `x`, and `x[k + 1] == y[k]`.
pub fn simulate_trajectory(
    system: &SdeSystem,
    x0: &[f64],
    n_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<SnapshotData> {
    let d = system.dim();
    if x0.len() != d {
        return Err(Error::shape(format!("x0 of length {d}"), format!("{}", x0.len())));
    }
    if n_steps == 0 {
        return Err(Error::InvalidInput("n_steps must be positive".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationDiverged { step: 0, state: x0.to_vec() });
    }

    // Noise is drawn dimension-major: all steps of W₁, then all steps of W₂, ...
    let m_w = system.noise_dim();
    let mut rng = stream_rng(seed, Stream::Trajectory, 0);
    let noise: Vec<f64> = (0..m_w * n_steps).map(|_| rng.sample(StandardNormal)).collect();

    let mut x = DMatrix::zeros(n_steps, d);
    let mut y = DMatrix::zeros(n_steps, d);
    let mut state = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut w = vec![0.0; m_w];
    for k in 0..n_steps {
        for (j, wj) in w.iter_mut().enumerate() {
            *wj = noise[j * n_steps + k];
        }
        em_step_into(system, &state, dt, &w, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationDiverged { step: k, state });
        }
        for i in 0..d {
            x[(k, i)] = state[i];
            y[(k, i)] = next[i];
        }
        std::mem::swap(&mut state, &mut next);
    }
    SnapshotData::new(x, y, dt, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn system(name: &str) -> SdeSystem {
        builtin_system(name, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn double_well_equilibrium_is_fixed_without_noise() {
        let s = system("double_well");
        for dt in [1e-3, 0.01, 0.1] {
            assert_eq!(euler_maruyama_step(&s, &[1.0, 0.0], dt, &[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);
            assert_eq!(euler_maruyama_step(&s, &[-1.0, 0.0], dt, &[0.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
        }
    }

    #[test]
    fn duffing_saddle_and_wells_are_fixed() {
        let s = system("duffing");
        assert_eq!(euler_maruyama_step(&s, &[0.0, 0.0], 0.01, &[0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(s.drift(&[1.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(s.drift(&[-1.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn fhn_drift_is_small_near_fixed_point() {
        let s = system("fhn");
        let b = s.drift(&[-0.549, -0.494]);
        assert!(b.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-2);
        let y = euler_maruyama_step(&s, &[-0.549, -0.494], 0.01, &[0.0, 0.0]).unwrap();
        assert!((y[0] + 0.549).abs() < 1e-4 && (y[1] + 0.494).abs() < 1e-4);
    }

    #[test]
    fn builtin_drift_values() {
        assert_eq!(system("double_well").drift(&[0.0, 0.0]), vec![0.0, 0.0]);
        let fhn = system("fhn").drift(&[0.0, 0.0]);
        assert_abs_diff_eq!(fhn[1], 0.005, epsilon = 1e-15);
    }

    #[test]
    fn builtin_defaults() {
        let dw = system("double_well");
        assert_eq!(dw.kind, SystemKind::DoubleWell { sigma1: 1.09, sigma2: 1.09 });
        assert_eq!(dw.domain.lower, vec![-3.0, -4.0]);
        assert_eq!(dw.domain.upper, vec![3.0, 4.0]);
        match system("fhn").kind {
            SystemKind::Fhn { sigma1, sigma2, .. } => {
                assert_eq!(sigma1, 1e-3);
                assert_eq!(sigma2, 1e-5);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn unknown_system_and_param_are_config_errors() {
        assert!(matches!(builtin_system("lorenz", &BTreeMap::new()), Err(Error::Config(_))));
        let mut p = BTreeMap::new();
        p.insert("gamma".to_string(), 1.0);
        assert!(matches!(builtin_system("duffing", &p), Err(Error::Config(_))));
    }

    #[test]
    fn shapes_of_drift_and_diffusion() {
        for name in BUILTIN_NAMES {
            let s = system(name);
            let x = vec![0.3; s.dim()];
            assert_eq!(s.drift(&x).len(), s.dim());
            assert_eq!(s.diffusion(&x).shape(), (s.dim(), s.noise_dim()));
        }
    }

    #[test]
    fn zero_diffusion_linear_step() {
        let s = SdeSystem::ou(1.0, 0.0);
        let data = simulate_trajectory(&s, &[1.0], 1, 0.01, 0).unwrap();
        assert_abs_diff_eq!(data.y[(0, 0)], 0.99, epsilon = 1e-15);
    }

    #[test]
    fn trajectory_is_deterministic_and_chained() {
        let s = system("double_well");
        let a = simulate_trajectory(&s, &[0.5, 0.5], 200, 0.01, 42).unwrap();
        let b = simulate_trajectory(&s, &[0.5, 0.5], 200, 0.01, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x.shape(), (200, 2));
        for k in 0..199 {
            assert_eq!(a.x.row(k + 1), a.y.row(k));
        }
        let c = simulate_trajectory(&s, &[0.5, 0.5], 200, 0.01, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        // Explicit Euler on the cubic drift blows up for a large step.
        let s = system("double_well");
        match simulate_trajectory(&s, &[3.0, 0.0], 500, 0.5, 1) {
            Err(Error::IntegrationDiverged { step, state }) => {
                assert!(step < 500);
                assert_eq!(state.len(), 2);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
