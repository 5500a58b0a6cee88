//! Python bindings. Matrices cross the boundary as lists of rows.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rsdmd::env::{compute_reward, RewardConfig};
use rsdmd::experiment::regret::RegretSummary;
use rsdmd::experiment::{run_experiment as run_experiment_rs, run_regret_experiment, ExperimentConfig, RegretExperiment};
use rsdmd::rng::{stream_rng, Stream};
use rsdmd::sdmd::{build_gram, eigenfunction_values, estimate_koopman_with, evaluate_data, GeneratorMode, KoopmanOptions};
use rsdmd::sde::{builtin_system, simulate_trajectory, Domain, SdeSystem, SnapshotData};

fn to_py(e: rsdmd::Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("ragged matrix: rows differ in length"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows<T: Copy + nalgebra::Scalar>(m: &DMatrix<T>) -> Vec<Vec<T>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

type Snapshots = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn system(name: &str, params: Option<BTreeMap<String, f64>>) -> PyResult<SdeSystem> {
    builtin_system(name, &params.unwrap_or_default()).map_err(to_py)
}

/// One Euler–Maruyama trajectory; returns `(x, y)` snapshot pairs.
#[pyfunction]
#[pyo3(signature = (name, x0, n_steps, dt, seed=0, params=None))]
fn simulate(
    name: &str,
    x0: Vec<f64>,
    n_steps: usize,
    dt: f64,
    seed: u64,
    params: Option<BTreeMap<String, f64>>,
) -> PyResult<Snapshots> {
    let sys = system(name, params)?;
    let data = simulate_trajectory(&sys, &x0, n_steps, dt, seed).map_err(to_py)?;
    Ok((rows(&data.x), rows(&data.y)))
}

#[pyclass(name = "Dictionary", module = "reinforced_sdmd")]
struct PyDictionary {
    inner: rsdmd::dictionary::Dictionary,
}

#[pymethods]
impl PyDictionary {
    /// Gaussian RBFs on a regular grid plus a constant feature.
    #[staticmethod]
    #[pyo3(signature = (lower, upper, per_axis, bandwidth=None))]
    fn rbf_grid(lower: Vec<f64>, upper: Vec<f64>, per_axis: usize, bandwidth: Option<Vec<f64>>) -> PyResult<Self> {
        let domain = Domain::new(lower, upper).map_err(to_py)?;
        let inner = rsdmd::dictionary::Dictionary::rbf_grid(&domain, per_axis, bandwidth).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn monomial(dim: usize, max_degree: usize) -> PyResult<Self> {
        let inner = rsdmd::dictionary::Dictionary::monomial(dim, max_degree).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn hermite(dim: usize, max_degree: usize) -> PyResult<Self> {
        let inner = rsdmd::dictionary::Dictionary::hermite(dim, max_degree).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.size()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Feature matrix, one row per point.
    fn evaluate(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let psi = self.inner.evaluate(&matrix(&points)?).map_err(to_py)?;
        Ok(rows(&psi))
    }

    /// Generator applied to every feature, using the named system's drift
    /// and diffusion.
    #[pyo3(signature = (points, system_name, params=None))]
    fn generator(&self, points: Vec<Vec<f64>>, system_name: &str, params: Option<BTreeMap<String, f64>>) -> PyResult<Vec<Vec<f64>>> {
        let sys = system(system_name, params)?;
        let out = self.inner.generator_apply(&sys, &matrix(&points)?).map_err(to_py)?;
        Ok(rows(&out))
    }

    fn __repr__(&self) -> String {
        format!("Dictionary(kind={:?}, dim={}, size={})", self.inner.kind(), self.inner.dim(), self.inner.size())
    }
}

#[pyclass(name = "KoopmanEstimate", module = "reinforced_sdmd")]
struct PyKoopmanEstimate {
    inner: rsdmd::sdmd::KoopmanEstimate,
}

#[pymethods]
impl PyKoopmanEstimate {
    /// Eigenvalues of `K̂`, by modulus, descending.
    #[getter]
    fn mu(&self) -> Vec<Complex64> {
        self.inner.mu.clone()
    }

    /// Generator eigenvalues `log(μ)/dt`; `None` where the branch is ambiguous.
    #[getter]
    fn lambdas(&self) -> Vec<Option<Complex64>> {
        self.inner.lambda.clone()
    }

    #[getter]
    fn k(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.k)
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn condition(&self) -> f64 {
        self.inner.condition
    }

    /// Eigenfunction values at points given the dictionary features there.
    fn eigenfunctions(&self, psi: Vec<Vec<f64>>) -> PyResult<Vec<Vec<Complex64>>> {
        let phi = eigenfunction_values(&self.inner, &matrix(&psi)?).map_err(to_py)?;
        Ok(rows(&phi))
    }

    fn __repr__(&self) -> String {
        let lead: Vec<String> = self.inner.mu.iter().take(3).map(|m| format!("{:.6}{:+.6}i", m.re, m.im)).collect();
        format!("KoopmanEstimate(size={}, mu=[{}, ...])", self.inner.size(), lead.join(", "))
    }
}

/// SDMD from snapshot pairs. `mode` is `"analytic"` (needs `system_name`) or
/// `"finite_diff"`; `ridge=None` picks the default.
#[pyfunction]
#[pyo3(signature = (dictionary, x, y, dt, mode="analytic", system_name=None, params=None, ridge=None))]
#[allow(clippy::too_many_arguments)]
fn sdmd(
    dictionary: &PyDictionary,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    dt: f64,
    mode: &str,
    system_name: Option<&str>,
    params: Option<BTreeMap<String, f64>>,
    ridge: Option<f64>,
) -> PyResult<PyKoopmanEstimate> {
    let mode = match mode {
        "analytic" => GeneratorMode::Analytic,
        "finite_diff" => GeneratorMode::FiniteDiff,
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    };
    let sys = system_name.map(|n| system(n, params)).transpose()?;
    let data = SnapshotData::new(matrix(&x)?, matrix(&y)?, dt, 0).map_err(to_py)?;
    let ev = evaluate_data(&dictionary.inner, &data, sys.as_ref(), mode).map_err(to_py)?;
    let (g, h) = build_gram(&ev.psi_x, &ev.psi_prime_x).map_err(to_py)?;
    let opts = KoopmanOptions {
        ridge,
        ..KoopmanOptions::default()
    };
    let inner = estimate_koopman_with(&g, &h, dt, &opts).map_err(to_py)?;
    Ok(PyKoopmanEstimate { inner })
}

/// `(total, bonus)` of the sampling reward for a consistency residual and
/// KDE density.
#[pyfunction]
#[pyo3(signature = (consistency, density, r0=1.0, alpha_exp=0.15, eps_kde=0.01))]
fn reward(consistency: f64, density: f64, r0: f64, alpha_exp: f64, eps_kde: f64) -> (f64, f64) {
    let cfg = RewardConfig {
        r0,
        alpha_exp,
        eps_kde,
        ..RewardConfig::default()
    };
    let r = compute_reward(consistency, density, &cfg);
    (r.total, r.bonus)
}

#[pyclass(name = "BanditAgent", module = "reinforced_sdmd")]
struct PyBanditAgent {
    inner: rsdmd::agents::BanditAgent,
    seed: u64,
    t: u64,
}

#[pymethods]
impl PyBanditAgent {
    #[new]
    #[pyo3(signature = (n_actions, epsilon=0.35, q_init=0.0, seed=0))]
    fn new(n_actions: usize, epsilon: f64, q_init: f64, seed: u64) -> PyResult<Self> {
        let inner = rsdmd::agents::BanditAgent::new(n_actions, epsilon, q_init).map_err(to_py)?;
        Ok(Self { inner, seed, t: 0 })
    }

    /// ε-greedy action; successive calls draw from successive streams.
    fn select(&mut self) -> usize {
        let a = self.inner.select(&mut stream_rng(self.seed, Stream::Agent, self.t));
        self.t += 1;
        a
    }

    fn update(&mut self, action: usize, reward: f64) -> PyResult<()> {
        self.inner.update(action, reward).map_err(to_py)
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q.clone()
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.n.clone()
    }
}

/// Run a full experiment from JSON config text; returns `(output_dir, steps)`.
#[pyfunction]
fn run_experiment(config_json: &str) -> PyResult<(String, u64)> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let out = run_experiment_rs(&cfg).map_err(to_py)?;
    Ok((out.dir.to_string_lossy().into_owned(), out.steps))
}

/// Parse and resolve config text; returns the resolved config as JSON.
#[pyfunction]
fn validate_config(config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    cfg.resolve().and_then(|c| c.to_json_pretty()).map_err(to_py)
}

#[pyclass(name = "RegretResult", module = "reinforced_sdmd", get_all)]
struct PyRegretResult {
    cumulative: Vec<f64>,
    first_decade_rate: f64,
    final_decade_rate: f64,
    last_half_slope: f64,
    last_half_r_squared: f64,
    gap_holds: bool,
}

impl From<(Vec<f64>, RegretSummary)> for PyRegretResult {
    fn from((cumulative, s): (Vec<f64>, RegretSummary)) -> Self {
        Self {
            cumulative,
            first_decade_rate: s.first_decade_rate,
            final_decade_rate: s.final_decade_rate,
            last_half_slope: s.linear_fit_last_half.slope,
            last_half_r_squared: s.linear_fit_last_half.r_squared,
            gap_holds: s.gap.holds,
        }
    }
}

/// ε-greedy regret with bounded estimation error `eps`.
#[pyfunction]
#[pyo3(signature = (arms, eps, horizon=100_000, seed=0, c=None))]
fn regret(arms: Vec<f64>, eps: f64, horizon: u64, seed: u64, c: Option<f64>) -> PyResult<PyRegretResult> {
    let spec = RegretExperiment {
        true_means: arms,
        eps_sdmd: eps,
        c,
        horizon,
    };
    let run = run_regret_experiment(&spec, seed).map_err(to_py)?;
    Ok((run.cumulative, run.summary).into())
}

/// `(max_rel_error, passed)` of the derivative integrity check.
#[pyfunction]
#[pyo3(signature = (seeds=10))]
fn gradcheck(seeds: u64) -> PyResult<(f64, bool)> {
    let r = rsdmd::experiment::gradcheck::run_gradcheck(seeds).map_err(to_py)?;
    Ok((r.max_rel_error, r.passed))
}

#[pymodule]
fn reinforced_sdmd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyKoopmanEstimate>()?;
    m.add_class::<PyBanditAgent>()?;
    m.add_class::<PyRegretResult>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sdmd, m)?)?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(regret, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
