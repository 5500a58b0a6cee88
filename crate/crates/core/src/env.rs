//! The sampling environment: an action grid over the state domain, a sliding
//! window of recent starting points, one trajectory per action, an SDMD fit
//! on the pooled window data and the consistency-plus-exploration reward.
//!
//! All randomness is derived from `(seed, stream, counter)`, so the state of
//! an environment is fully described by its window, history and step count.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::sdmd::{
    build_gram, estimate_koopman_with, evaluate_data, spectral_consistency, train_dictionary, Evaluated,
    GeneratorMode, GramAccumulator, KoopmanEstimate, KoopmanOptions, TrainConfig,
};
use crate::sde::{simulate_trajectory, Domain, SdeSystem, SnapshotData};

/// A uniform `k^d` partition of a box. Actions enumerate cells with the first
/// axis varying slowest, so in 2-D `action = ix·k + iy`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub k: usize,
    pub domain: Domain,
}

impl ActionGrid {
    pub fn new(k: usize, domain: Domain) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("grid k must be positive".into()));
        }
        Ok(Self { k, domain })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn n_actions(&self) -> usize {
        self.k.pow(self.dim() as u32)
    }

    fn check(&self, action: usize) -> Result<()> {
        if action >= self.n_actions() {
            return Err(Error::ActionOutOfRange {
                action,
                n_actions: self.n_actions(),
            });
        }
        Ok(())
    }

    pub fn cell_indices(&self, action: usize) -> Result<Vec<usize>> {
        self.check(action)?;
        let d = self.dim();
        let mut idx = vec![0; d];
        let mut rest = action;
        for axis in (0..d).rev() {
            idx[axis] = rest % self.k;
            rest /= self.k;
        }
        Ok(idx)
    }

    pub fn action_of(&self, indices: &[usize]) -> Result<usize> {
        if indices.len() != self.dim() || indices.iter().any(|&i| i >= self.k) {
            return Err(Error::InvalidInput(format!("bad cell indices {indices:?}")));
        }
        Ok(indices.iter().fold(0, |acc, &i| acc * self.k + i))
    }

    /// `[lower, upper)` of the cell.
    pub fn cell_bounds(&self, action: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let idx = self.cell_indices(action)?;
        let mut lo = Vec::with_capacity(idx.len());
        let mut hi = Vec::with_capacity(idx.len());
        for (axis, &i) in idx.iter().enumerate() {
            let w = self.domain.width(axis) / self.k as f64;
            lo.push(self.domain.lower[axis] + i as f64 * w);
            hi.push(self.domain.lower[axis] + (i + 1) as f64 * w);
        }
        Ok((lo, hi))
    }

    pub fn cell_center(&self, action: usize) -> Result<Vec<f64>> {
        let (lo, hi) = self.cell_bounds(action)?;
        Ok(lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect())
    }

    /// Cell containing `point`; the upper domain face belongs to the last cell.
    pub fn cell_of(&self, point: &[f64]) -> Option<usize> {
        if point.len() != self.dim() || !self.domain.contains(point) {
            return None;
        }
        let idx: Vec<usize> = point
            .iter()
            .enumerate()
            .map(|(axis, &v)| {
                let w = self.domain.width(axis) / self.k as f64;
                (((v - self.domain.lower[axis]) / w).floor() as usize).min(self.k - 1)
            })
            .collect();
        self.action_of(&idx).ok()
    }
}

/// Uniform draw from the cell of `action`.
pub fn sample_initial_point<R: Rng + ?Sized>(grid: &ActionGrid, action: usize, rng: &mut R) -> Result<Vec<f64>> {
    let (lo, hi) = grid.cell_bounds(action)?;
    Ok(lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..*b)).collect())
}

/// Gaussian KDE `(1/|H|) Σ_p exp(−‖q − p‖²/(2h²)) / (2πh²)^{d/2}`; 0 for an
/// empty history.
pub fn kde_density(history: &[Vec<f64>], query: &[f64], bandwidth: f64) -> f64 {
    if history.is_empty() {
        return 0.0;
    }
    let d = query.len() as f64;
    let norm = (2.0 * std::f64::consts::PI * bandwidth * bandwidth).powf(d / 2.0);
    let inv = 1.0 / (2.0 * bandwidth * bandwidth);
    let sum: f64 = history
        .iter()
        .map(|p| {
            let r2: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 * inv).exp()
        })
        .sum();
    sum / (history.len() as f64 * norm)
}

/// Sliding window of the last `capacity` starting points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateWindow {
    pub capacity: usize,
    pub points: VecDeque<Vec<f64>>,
}

impl StateWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            points: VecDeque::with_capacity(capacity),
        }
    }

    /// Push and return the evicted point, if any.
    pub fn push(&mut self, point: Vec<f64>) -> Option<Vec<f64>> {
        if self.capacity == 0 {
            return None;
        }
        self.points.push_back(point);
        if self.points.len() > self.capacity {
            self.points.pop_front()
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Oldest-first concatenation, scaled to `[−1, 1]` per axis and padded
    /// with zeros to the fixed length `d·capacity`.
    pub fn flatten(&self, domain: &Domain) -> Vec<f64> {
        let d = domain.dim();
        let mut out = vec![0.0; d * self.capacity];
        for (i, p) in self.points.iter().enumerate() {
            for axis in 0..d {
                out[i * d + axis] = 2.0 * (p[axis] - domain.lower[axis]) / domain.width(axis) - 1.0;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub r0: f64,
    pub alpha_exp: f64,
    pub eps_kde: f64,
    /// KDE bandwidth; `None` means half a grid cell along the domain diagonal.
    pub bandwidth: Option<f64>,
    /// Leading modes entering the consistency term.
    pub n_modes: usize,
    /// Reward assigned when a trajectory diverges or the fit fails.
    pub floor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r0: 1.0,
            alpha_exp: 0.15,
            eps_kde: 1e-2,
            bandwidth: None,
            n_modes: 5,
            floor: -10.0,
        }
    }
}

/// `total = r0 − consistency + bonus`, `bonus = α_exp / (density + ε_kde)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r0: f64,
    pub consistency: f64,
    pub density: f64,
    pub bonus: f64,
    pub total: f64,
}

pub fn compute_reward(consistency: f64, density: f64, cfg: &RewardConfig) -> RewardBreakdown {
    let bonus = cfg.alpha_exp / (density + cfg.eps_kde);
    RewardBreakdown {
        r0: cfg.r0,
        consistency,
        density,
        bonus,
        total: cfg.r0 - consistency + bonus,
    }
}

/// The floor reward, expressed so the decomposition identity still holds:
/// the consistency slot carries the effective penalty.
fn floor_reward(density: f64, cfg: &RewardConfig) -> RewardBreakdown {
    let bonus = cfg.alpha_exp / (density + cfg.eps_kde);
    RewardBreakdown {
        r0: cfg.r0,
        consistency: cfg.r0 + bonus - cfg.floor,
        density,
        bonus,
        total: cfg.floor,
    }
}

/// Optional dictionary learning inside the environment.
#[derive(Clone, Debug, PartialEq)]
pub struct DictionaryLearning {
    pub train: TrainConfig,
    /// Snapshot pairs kept (reservoir sampling) for the run-level estimate.
    pub reservoir: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub system: SdeSystem,
    pub dt: f64,
    pub n_steps: usize,
    pub grid: ActionGrid,
    pub window: usize,
    pub dictionary: Dictionary,
    pub generator: GeneratorMode,
    pub reward: RewardConfig,
    pub ridge: Option<f64>,
    pub learning: Option<DictionaryLearning>,
    pub seed: u64,
}

impl EnvConfig {
    pub fn kde_bandwidth(&self) -> f64 {
        self.reward
            .bandwidth
            .unwrap_or_else(|| self.grid.domain.diagonal() / (2.0 * self.grid.k as f64))
    }
}

/// Evaluated trajectory plus its partial Gram sums.
#[derive(Clone, Debug)]
struct TrajectoryData {
    data: Option<SnapshotData>,
    eval: Option<Evaluated>,
    grams: Option<GramAccumulator>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub point: Vec<f64>,
    /// Trajectory identifier; seeds the noise of this point's trajectory.
    pub id: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepInfo {
    pub step: u64,
    pub action: usize,
    pub x_new: Vec<f64>,
    pub reward: RewardBreakdown,
    /// Leading `(μ, λ)` of the per-step estimate, as `[re, im]`.
    pub leading_mu: Vec<[f64; 2]>,
    pub leading_lambda: Vec<Option<[f64; 2]>>,
    /// Set when the trajectory diverged or the SDMD fit failed.
    pub failure: Option<String>,
}

/// Common interface for environments driven by the agents.
pub trait Environment {
    fn n_actions(&self) -> usize;
    fn observation(&self) -> Vec<f64>;
    fn observation_dim(&self) -> usize;
    /// Apply `action`; returns the scalar reward and the next observation.
    fn act(&mut self, action: usize) -> Result<(f64, StepInfo)>;
}

/// Serializable environment state (trajectories are regenerated from ids).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub step: u64,
    pub window: Vec<WindowEntry>,
    pub history: Vec<Vec<f64>>,
    pub global_gram: Option<Vec<Vec<f64>>>,
    pub global_cross: Option<Vec<Vec<f64>>>,
    pub global_count: usize,
    pub reservoir_x: Vec<Vec<f64>>,
    pub reservoir_y: Vec<Vec<f64>>,
    pub reservoir_seen: u64,
}

pub struct SdmdEnv {
    cfg: EnvConfig,
    window: VecDeque<(WindowEntry, TrajectoryData)>,
    history: Vec<Vec<f64>>,
    step: u64,
    global: GramAccumulator,
    reservoir_x: Vec<Vec<f64>>,
    reservoir_y: Vec<Vec<f64>>,
    reservoir_seen: u64,
    dictionary: Dictionary,
    last_estimate: Option<KoopmanEstimate>,
}

/// Window points present before the first step get ids `0..ℓ`; the point
/// chosen at step `t` gets id `ℓ + t`.
fn step_id(window: usize, step: u64) -> u64 {
    window as u64 + step
}

impl SdmdEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        if cfg.grid.dim() != cfg.system.dim() || cfg.dictionary.dim() != cfg.system.dim() {
            return Err(Error::Config(format!(
                "dimension mismatch: system {}, grid {}, dictionary {}",
                cfg.system.dim(),
                cfg.grid.dim(),
                cfg.dictionary.dim()
            )));
        }
        if cfg.n_steps == 0 || !(cfg.dt > 0.0) {
            return Err(Error::Config("trajectory length and dt must be positive".into()));
        }
        if cfg.learning.is_some() && cfg.dictionary.trainable_offset().is_none() {
            return Err(Error::Config("dictionary learning needs a trainable dictionary".into()));
        }
        let n = cfg.dictionary.size();
        let mut env = Self {
            dictionary: cfg.dictionary.clone(),
            window: VecDeque::new(),
            history: Vec::new(),
            step: 0,
            global: GramAccumulator::new(n),
            reservoir_x: Vec::new(),
            reservoir_y: Vec::new(),
            reservoir_seen: 0,
            last_estimate: None,
            cfg,
        };
        // Initial window: ℓ uniform points over the domain.
        for i in 0..env.cfg.window {
            let mut rng = stream_rng(env.cfg.seed, Stream::WindowInit, i as u64);
            let action = rng.random_range(0..env.cfg.grid.n_actions());
            let point = sample_initial_point(&env.cfg.grid, action, &mut rng)?;
            let entry = WindowEntry { point, id: i as u64 };
            let traj = env.trajectory(&entry)?;
            env.window.push_back((entry, traj));
        }
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn history(&self) -> &[Vec<f64>] {
        &self.history
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn last_estimate(&self) -> Option<&KoopmanEstimate> {
        self.last_estimate.as_ref()
    }

    pub fn window_points(&self) -> Vec<Vec<f64>> {
        self.window.iter().map(|(e, _)| e.point.clone()).collect()
    }

    fn koopman_options(&self) -> KoopmanOptions {
        KoopmanOptions {
            ridge: self.cfg.ridge,
            gamma_reg: 0.0,
            n_vectors: Some(self.cfg.reward.n_modes.max(2)),
            pinv_fallback: true,
        }
    }

    fn trajectory(&self, entry: &WindowEntry) -> Result<TrajectoryData> {
        let seed = derive_seed(self.cfg.seed, Stream::Trajectory, entry.id);
        match simulate_trajectory(&self.cfg.system, &entry.point, self.cfg.n_steps, self.cfg.dt, seed) {
            Ok(data) => {
                if self.cfg.learning.is_some() {
                    return Ok(TrajectoryData {
                        data: Some(data),
                        eval: None,
                        grams: None,
                    });
                }
                let eval = evaluate_data(&self.dictionary, &data, Some(&self.cfg.system), self.cfg.generator)?;
                let mut acc = GramAccumulator::new(self.dictionary.size());
                acc.add(&eval.psi_x, &eval.psi_prime_x)?;
                Ok(TrajectoryData {
                    data: Some(data),
                    eval: Some(eval),
                    grams: Some(acc),
                })
            }
            Err(Error::IntegrationDiverged { .. }) => Ok(TrajectoryData {
                data: None,
                eval: None,
                grams: None,
            }),
            Err(e) => Err(e),
        }
    }

    fn reservoir_add(&mut self, data: &SnapshotData) {
        let Some(learning) = &self.cfg.learning else { return };
        let cap = learning.reservoir;
        for r in 0..data.len() {
            let x: Vec<f64> = data.x.row(r).iter().copied().collect();
            let y: Vec<f64> = data.y.row(r).iter().copied().collect();
            if self.reservoir_x.len() < cap {
                self.reservoir_x.push(x);
                self.reservoir_y.push(y);
            } else {
                let mut rng = stream_rng(self.cfg.seed, Stream::Reservoir, self.reservoir_seen);
                let j = rng.random_range(0..=self.reservoir_seen) as usize;
                if j < cap {
                    self.reservoir_x[j] = x;
                    self.reservoir_y[j] = y;
                }
            }
            self.reservoir_seen += 1;
        }
    }

    /// SDMD on the window trajectories plus the new one; returns the estimate
    /// and the consistency residual.
    fn fit(&mut self, new: &TrajectoryData) -> Result<(KoopmanEstimate, f64)> {
        let parts: Vec<&TrajectoryData> = self.window.iter().map(|(_, t)| t).chain(std::iter::once(new)).collect();
        let n_modes = self.cfg.reward.n_modes;
        if let Some(learning) = &self.cfg.learning {
            let datasets: Vec<&SnapshotData> = parts.iter().filter_map(|t| t.data.as_ref()).collect();
            if datasets.is_empty() {
                return Err(Error::InsufficientData { needed: 1, available: 0 });
            }
            let pooled = SnapshotData::concat(&datasets)?;
            let mut train = learning.train.clone();
            train.seed = derive_seed(self.cfg.seed, Stream::Dictionary, self.step);
            train.ridge = self.cfg.ridge;
            let outcome = train_dictionary(&pooled, self.dictionary.clone(), Some(&self.cfg.system), &train)?;
            self.dictionary = outcome.dictionary;
            let ev = evaluate_data(&self.dictionary, &pooled, Some(&self.cfg.system), self.cfg.generator)?;
            let (g, h) = build_gram(&ev.psi_x, &ev.psi_prime_x)?;
            let est = estimate_koopman_with(&g, &h, self.cfg.dt, &self.koopman_options())?;
            let rep = spectral_consistency(&est, &ev.psi_x, &ev.psi_y, None, n_modes)?;
            return Ok((est, rep.total));
        }

        let n = self.dictionary.size();
        let mut acc = GramAccumulator::new(n);
        let mut rows = 0;
        for t in &parts {
            if let Some(g) = &t.grams {
                acc.merge(g);
                rows += g.count;
            }
        }
        if rows == 0 {
            return Err(Error::InsufficientData { needed: 1, available: 0 });
        }
        let (g, h) = acc.grams()?;
        let est = estimate_koopman_with(&g, &h, self.cfg.dt, &self.koopman_options())?;
        let mut psi_x = DMatrix::zeros(rows, n);
        let mut psi_y = DMatrix::zeros(rows, n);
        let mut r = 0;
        for t in &parts {
            if let Some(ev) = &t.eval {
                let m = ev.psi_x.nrows();
                psi_x.rows_mut(r, m).copy_from(&ev.psi_x);
                psi_y.rows_mut(r, m).copy_from(&ev.psi_y);
                r += m;
            }
        }
        let rep = spectral_consistency(&est, &psi_x, &psi_y, None, n_modes)?;
        Ok((est, rep.total))
    }

    pub fn step(&mut self, action: usize) -> Result<StepInfo> {
        self.cfg.grid.cell_indices(action)?;
        let t = self.step;
        let mut rng = stream_rng(self.cfg.seed, Stream::InitialPoint, t);
        let x_new = sample_initial_point(&self.cfg.grid, action, &mut rng)?;
        let density = kde_density(&self.history, &x_new, self.cfg.kde_bandwidth());

        let entry = WindowEntry {
            point: x_new.clone(),
            id: step_id(self.cfg.window, t),
        };
        let traj = self.trajectory(&entry)?;
        let mut failure = None;
        if let Some(g) = &traj.grams {
            self.global.merge(g);
        }
        if let Some(data) = traj.data.clone() {
            self.reservoir_add(&data);
        } else {
            failure = Some("trajectory diverged".to_string());
        }

        let (reward, leading_mu, leading_lambda) = match self.fit(&traj) {
            Ok((est, consistency)) if failure.is_none() && consistency.is_finite() => {
                let reward = compute_reward(consistency, density, &self.cfg.reward);
                let lead = est.leading(self.cfg.reward.n_modes);
                let mu = lead.iter().map(|(m, _)| [m.re, m.im]).collect();
                let lam = lead.iter().map(|(_, l)| l.map(|c: C64| [c.re, c.im])).collect();
                self.last_estimate = Some(est);
                (reward, mu, lam)
            }
            Ok(_) => {
                failure.get_or_insert_with(|| "non-finite consistency".to_string());
                (floor_reward(density, &self.cfg.reward), Vec::new(), Vec::new())
            }
            Err(e) => {
                failure = Some(match failure {
                    Some(f) => f,
                    None => format!("sdmd fit failed: {e}"),
                });
                (floor_reward(density, &self.cfg.reward), Vec::new(), Vec::new())
            }
        };

        self.history.push(x_new.clone());
        if self.cfg.window > 0 {
            self.window.push_back((entry, traj));
            if self.window.len() > self.cfg.window {
                self.window.pop_front();
            }
        }
        self.step += 1;
        Ok(StepInfo {
            step: t,
            action,
            x_new,
            reward,
            leading_mu,
            leading_lambda,
            failure,
        })
    }

    /// Estimate from every trajectory generated so far (or from the
    /// reservoir under dictionary learning).
    pub fn global_estimate(&self, n_vectors: usize) -> Result<KoopmanEstimate> {
        let opts = KoopmanOptions {
            n_vectors: Some(n_vectors),
            ..self.koopman_options()
        };
        if self.cfg.learning.is_some() {
            if self.reservoir_x.is_empty() {
                return Err(Error::InsufficientData { needed: 1, available: 0 });
            }
            let d = self.cfg.system.dim();
            let m = self.reservoir_x.len();
            let x = DMatrix::from_row_iterator(m, d, self.reservoir_x.iter().flatten().copied());
            let y = DMatrix::from_row_iterator(m, d, self.reservoir_y.iter().flatten().copied());
            let data = SnapshotData::new(x, y, self.cfg.dt, self.cfg.seed)?;
            let ev = evaluate_data(&self.dictionary, &data, Some(&self.cfg.system), self.cfg.generator)?;
            let (g, h) = build_gram(&ev.psi_x, &ev.psi_prime_x)?;
            return estimate_koopman_with(&g, &h, self.cfg.dt, &opts);
        }
        let (g, h) = self.global.grams()?;
        estimate_koopman_with(&g, &h, self.cfg.dt, &opts)
    }

    pub fn state(&self) -> EnvState {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
        let learning = self.cfg.learning.is_some();
        EnvState {
            step: self.step,
            window: self.window.iter().map(|(e, _)| e.clone()).collect(),
            history: self.history.clone(),
            global_gram: (!learning).then(|| rows(&self.global.gram_sum)),
            global_cross: (!learning).then(|| rows(&self.global.cross_sum)),
            global_count: self.global.count,
            reservoir_x: self.reservoir_x.clone(),
            reservoir_y: self.reservoir_y.clone(),
            reservoir_seen: self.reservoir_seen,
        }
    }

    /// Rebuild from a saved state; `dictionary` replaces the configured one
    /// (it differs only under dictionary learning).
    pub fn restore(cfg: EnvConfig, state: &EnvState, dictionary: Dictionary) -> Result<Self> {
        let mut env = SdmdEnv::new(cfg)?;
        env.dictionary = dictionary;
        env.step = state.step;
        env.history = state.history.clone();
        env.window.clear();
        for e in &state.window {
            let traj = env.trajectory(e)?;
            env.window.push_back((e.clone(), traj));
        }
        let n = env.dictionary.size();
        let mat = |rows: &Vec<Vec<f64>>| -> Result<DMatrix<f64>> {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config("checkpoint Gram matrix has the wrong size".into()));
            }
            Ok(DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied()))
        };
        if let (Some(g), Some(c)) = (&state.global_gram, &state.global_cross) {
            env.global = GramAccumulator {
                gram_sum: mat(g)?,
                cross_sum: mat(c)?,
                count: state.global_count,
            };
        }
        env.reservoir_x = state.reservoir_x.clone();
        env.reservoir_y = state.reservoir_y.clone();
        env.reservoir_seen = state.reservoir_seen;
        Ok(env)
    }
}

impl Environment for SdmdEnv {
    fn n_actions(&self) -> usize {
        self.cfg.grid.n_actions()
    }

    fn observation(&self) -> Vec<f64> {
        let mut w = StateWindow::new(self.cfg.window);
        for (e, _) in &self.window {
            w.push(e.point.clone());
        }
        w.flatten(&self.cfg.grid.domain)
    }

    fn observation_dim(&self) -> usize {
        self.cfg.window * self.cfg.system.dim()
    }

    fn act(&mut self, action: usize) -> Result<(f64, StepInfo)> {
        let info = self.step(action)?;
        Ok((info.reward.total, info))
    }
}

/// Cell-valued test environment: each action has a fixed mean reward plus
/// bounded uniform noise; the observation is a window of the last chosen
/// cell centers, as in [`SdmdEnv`].
pub struct SyntheticCellEnv {
    pub grid: ActionGrid,
    pub means: Vec<f64>,
    pub noise: f64,
    pub window: StateWindow,
    pub seed: u64,
    step: u64,
}

impl SyntheticCellEnv {
    pub fn new(grid: ActionGrid, means: Vec<f64>, noise: f64, window: usize, seed: u64) -> Result<Self> {
        if means.len() != grid.n_actions() {
            return Err(Error::shape(format!("{} means", grid.n_actions()), format!("{}", means.len())));
        }
        Ok(Self {
            grid,
            means,
            noise,
            window: StateWindow::new(window),
            seed,
            step: 0,
        })
    }

    /// The 2×2 grid on `[0, 1]²` with means `[0.2, 0.5, 1.0, 0.1]` (optimum 2).
    pub fn four_cells(window: usize, seed: u64) -> Self {
        let grid = ActionGrid::new(2, Domain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()).unwrap();
        SyntheticCellEnv::new(grid, vec![0.2, 0.5, 1.0, 0.1], 0.1, window, seed).unwrap()
    }

    pub fn optimal_action(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.means.iter().enumerate() {
            if *m > self.means[best] {
                best = i;
            }
        }
        best
    }
}

impl Environment for SyntheticCellEnv {
    fn n_actions(&self) -> usize {
        self.grid.n_actions()
    }

    fn observation(&self) -> Vec<f64> {
        self.window.flatten(&self.grid.domain)
    }

    fn observation_dim(&self) -> usize {
        self.window.capacity * self.grid.dim()
    }

    fn act(&mut self, action: usize) -> Result<(f64, StepInfo)> {
        self.grid.cell_indices(action)?;
        let mut rng = stream_rng(self.seed, Stream::InitialPoint, self.step);
        let x_new = self.grid.cell_center(action)?;
        let reward = self.means[action] + self.noise * rng.random_range(-1.0..1.0);
        self.window.push(x_new.clone());
        let info = StepInfo {
            step: self.step,
            action,
            x_new,
            reward: RewardBreakdown {
                r0: reward,
                consistency: 0.0,
                density: 0.0,
                bonus: 0.0,
                total: reward,
            },
            leading_mu: Vec::new(),
            leading_lambda: Vec::new(),
            failure: None,
        };
        self.step += 1;
        Ok((reward, info))
    }
}
