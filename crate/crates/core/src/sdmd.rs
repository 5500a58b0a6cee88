//! Stochastic DMD: Gram matrices, the operator `K̂ = I + dt·(Ĝ + rI)⁻¹Ĥ`,
//! its eigenpairs, eigenfunctions and the spectral-consistency residual.
//!
//! Eigenpairs are computed from the whitened problem `WᵀĤW z = ν z` with
//! `W = UΛ^{-1/2}` from the eigendecomposition of `Ĝ + rI`; then `μ = 1 + dt·ν`
//! and `ξ = W z` are exact eigenpairs of `K̂`. When the pseudo-inverse fallback
//! truncates directions of `Ĝ`, `K̂` acts as the identity on them and those
//! trivial unit modes are not reported.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dictionary::{finite_diff_generator, Dictionary};
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues_sorted, eigenvector, symmetric_eigen_desc, C64};
use crate::neural::{optimizer_step, OptimizerState};
use crate::rng::{stream_rng, Stream};
use crate::sde::{SdeSystem, SnapshotData};

pub const MAX_CONDITION: f64 = 1e12;
pub const DEGENERATE_MODULUS: f64 = 1e-12;

/// Default ridge `1e-8 · tr(Ĝ) / N`.
pub fn default_ridge(g: &DMatrix<f64>) -> f64 {
    if g.nrows() == 0 {
        return 0.0;
    }
    1e-8 * g.trace() / g.nrows() as f64
}

/// `Ĝ = Ψ_XᵀΨ_X / m`, `Ĥ = Ψ_XᵀΨ'_X / m`.
pub fn build_gram(psi_x: &DMatrix<f64>, psi_prime_x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if psi_x.shape() != psi_prime_x.shape() {
        return Err(Error::shape(format!("{:?}", psi_x.shape()), format!("{:?}", psi_prime_x.shape())));
    }
    let m = psi_x.nrows();
    if m == 0 {
        return Err(Error::InsufficientData { needed: 1, available: 0 });
    }
    let g = psi_x.tr_mul(psi_x) / m as f64;
    let h = psi_x.tr_mul(psi_prime_x) / m as f64;
    Ok((symmetrize(g), h))
}

fn symmetrize(g: DMatrix<f64>) -> DMatrix<f64> {
    (&g + g.transpose()) * 0.5
}

/// Running sums of `Ψ_XᵀΨ_X` and `Ψ_XᵀΨ'_X` over any number of batches.
#[derive(Clone, Debug, PartialEq)]
pub struct GramAccumulator {
    pub gram_sum: DMatrix<f64>,
    pub cross_sum: DMatrix<f64>,
    pub count: usize,
}

impl GramAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            gram_sum: DMatrix::zeros(n, n),
            cross_sum: DMatrix::zeros(n, n),
            count: 0,
        }
    }

    pub fn add(&mut self, psi_x: &DMatrix<f64>, psi_prime_x: &DMatrix<f64>) -> Result<()> {
        let n = self.gram_sum.nrows();
        if psi_x.ncols() != n || psi_x.shape() != psi_prime_x.shape() {
            return Err(Error::shape(format!("m × {n}"), format!("{:?}", psi_x.shape())));
        }
        self.gram_sum += psi_x.tr_mul(psi_x);
        self.cross_sum += psi_x.tr_mul(psi_prime_x);
        self.count += psi_x.nrows();
        Ok(())
    }

    pub fn merge(&mut self, other: &GramAccumulator) {
        self.gram_sum += &other.gram_sum;
        self.cross_sum += &other.cross_sum;
        self.count += other.count;
    }

    pub fn grams(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if self.count == 0 {
            return Err(Error::InsufficientData { needed: 1, available: 0 });
        }
        let m = self.count as f64;
        Ok((symmetrize(&self.gram_sum / m), &self.cross_sum / m))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeFlag {
    Ok,
    /// `|μ| < 1e-12`; no generator eigenvalue is reported.
    Degenerate,
    /// `μ` on the negative real axis; the logarithm branch is ambiguous.
    BranchAmbiguous,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanOptions {
    /// `None` selects [`default_ridge`].
    pub ridge: Option<f64>,
    /// Tikhonov weight on `‖K̂‖_F²` (dictionary learning); 0 gives plain SDMD.
    pub gamma_reg: f64,
    /// Eigenvectors computed for the leading modes only; `None` computes all.
    pub n_vectors: Option<usize>,
    /// Truncate instead of failing when `Ĝ + rI` is ill-conditioned.
    pub pinv_fallback: bool,
}

impl Default for KoopmanOptions {
    fn default() -> Self {
        Self {
            ridge: None,
            gamma_reg: 0.0,
            n_vectors: None,
            pinv_fallback: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KoopmanEstimate {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub dt: f64,
    /// Sorted by modulus, descending.
    pub mu: Vec<C64>,
    pub lambda: Vec<Option<C64>>,
    pub flags: Vec<ModeFlag>,
    /// Unit-norm eigenvectors of `K̂` for the leading modes, one per column.
    pub eigenvectors: DMatrix<C64>,
    pub regularization: f64,
    pub gamma_reg: f64,
    pub condition: f64,
    /// Number of directions of `Ĝ + rI` kept (`N` unless truncated).
    pub rank: usize,
}

/// `log(1 + w)` on the principal branch, accurate for small `w`.
fn complex_log1p(w: C64) -> C64 {
    let re = 0.5 * (2.0 * w.re + w.norm_sqr()).ln_1p();
    C64::new(re, w.im.atan2(1.0 + w.re))
}

/// Plain SDMD with an explicit ridge; fails on ill-conditioned Grams.
pub fn estimate_koopman(g: &DMatrix<f64>, h: &DMatrix<f64>, dt: f64, ridge: f64) -> Result<KoopmanEstimate> {
    estimate_koopman_with(
        g,
        h,
        dt,
        &KoopmanOptions {
            ridge: Some(ridge),
            ..KoopmanOptions::default()
        },
    )
}

pub fn estimate_koopman_with(g: &DMatrix<f64>, h: &DMatrix<f64>, dt: f64, opts: &KoopmanOptions) -> Result<KoopmanEstimate> {
    let n = g.nrows();
    if !g.is_square() || h.shape() != g.shape() {
        return Err(Error::shape(format!("{n}×{n} Gram pair"), format!("{:?} / {:?}", g.shape(), h.shape())));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty Gram matrices".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let ridge = opts.ridge.unwrap_or_else(|| default_ridge(g));
    if !(ridge >= 0.0) || !(opts.gamma_reg >= 0.0) {
        return Err(Error::InvalidInput("ridge and gamma_reg must be non-negative".into()));
    }
    if g.iter().chain(h.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("Gram matrices contain non-finite values".into()));
    }

    // K̂ = I + (Ĝ + (r + γ)I)⁻¹ (dt·Ĥ − γI); γ = 0 is plain SDMD.
    let shift = ridge + opts.gamma_reg;
    let mut a = symmetrize(g.clone());
    for i in 0..n {
        a[(i, i)] += shift;
    }
    let mut h_eff = h.clone();
    for i in 0..n {
        h_eff[(i, i)] -= opts.gamma_reg / dt;
    }

    let (vals, vecs) = symmetric_eigen_desc(&a)?;
    let top = vals[0];
    let bottom = vals[n - 1];
    let condition = if bottom <= 0.0 || top <= 0.0 { f64::INFINITY } else { top / bottom };
    if condition > MAX_CONDITION && !opts.pinv_fallback {
        return Err(Error::SingularGram { condition });
    }
    let cutoff = if condition > MAX_CONDITION { top / MAX_CONDITION } else { 0.0 };
    let rank = vals.iter().take_while(|&&v| v > cutoff && v > 0.0).count();
    if rank == 0 {
        return Err(Error::SingularGram { condition });
    }

    let mut w = DMatrix::zeros(n, rank);
    for j in 0..rank {
        let s = 1.0 / vals[j].sqrt();
        w.set_column(j, &(vecs.column(j) * s));
    }
    let k = DMatrix::identity(n, n) + (&w * (w.tr_mul(&h_eff))) * dt;
    let reduced = w.tr_mul(&(&h_eff * &w));

    // Sort on μ = 1 + dt·ν but keep ν to avoid cancellation in μ − 1.
    let nu = eigenvalues_sorted(&reduced)?;
    let mut pairs: Vec<(C64, C64)> = nu.into_iter().map(|v| (v, C64::new(1.0, 0.0) + v * dt)).collect();
    pairs.sort_by(|a, b| {
        b.1.norm()
            .total_cmp(&a.1.norm())
            .then(b.1.im.total_cmp(&a.1.im))
            .then(b.1.re.total_cmp(&a.1.re))
    });

    let mut mu = Vec::with_capacity(rank);
    let mut lambda = Vec::with_capacity(rank);
    let mut flags = Vec::with_capacity(rank);
    for &(v, m) in &pairs {
        mu.push(m);
        let scale = m.norm();
        if scale < DEGENERATE_MODULUS {
            lambda.push(None);
            flags.push(ModeFlag::Degenerate);
        } else if m.re < 0.0 && m.im.abs() <= 1e-14 * scale {
            lambda.push(None);
            flags.push(ModeFlag::BranchAmbiguous);
        } else {
            lambda.push(Some(complex_log1p(v * dt) / dt));
            flags.push(ModeFlag::Ok);
        }
    }

    let n_vec = opts.n_vectors.unwrap_or(rank).min(rank);
    let wc: DMatrix<C64> = w.map(|x| C64::new(x, 0.0));
    let mut eigenvectors = DMatrix::zeros(n, n_vec);
    for (j, &(v, _)) in pairs.iter().take(n_vec).enumerate() {
        let z = eigenvector(&reduced, v)?;
        let xi = &wc * z;
        let norm = xi.norm();
        let xi = if norm > 0.0 { xi / C64::new(norm, 0.0) } else { xi };
        eigenvectors.set_column(j, &crate::linalg::fix_phase(xi));
    }

    Ok(KoopmanEstimate {
        g: g.clone(),
        h: h.clone(),
        k,
        dt,
        mu,
        lambda,
        flags,
        eigenvectors,
        regularization: ridge,
        gamma_reg: opts.gamma_reg,
        condition,
        rank,
    })
}

impl KoopmanEstimate {
    pub fn size(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_vectors(&self) -> usize {
        self.eigenvectors.ncols()
    }

    /// Indices of the first `n` modes with eigenvectors that are not degenerate.
    pub fn retained_modes(&self, n: usize) -> Vec<usize> {
        (0..self.n_vectors())
            .filter(|&i| self.flags[i] != ModeFlag::Degenerate)
            .take(n)
            .collect()
    }

    /// Leading eigenvalues as `(μ, λ)` pairs.
    pub fn leading(&self, n: usize) -> Vec<(C64, Option<C64>)> {
        self.mu.iter().copied().zip(self.lambda.iter().copied()).take(n).collect()
    }

    /// `max_i ‖K̂ξ_i − μ_iξ_i‖` over computed eigenvectors.
    pub fn max_residual(&self) -> f64 {
        let kc: DMatrix<C64> = self.k.map(|x| C64::new(x, 0.0));
        (0..self.n_vectors())
            .map(|i| {
                let xi = self.eigenvectors.column(i);
                (&kc * xi - xi * self.mu[i]).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn eigenvalue_rows(&self, step: u64) -> Vec<EigenvalueRow> {
        self.mu
            .iter()
            .zip(&self.lambda)
            .enumerate()
            .map(|(index, (m, l))| EigenvalueRow {
                step,
                index,
                re_mu: m.re,
                im_mu: m.im,
                re_lambda: l.map_or(f64::NAN, |v| v.re),
                im_lambda: l.map_or(f64::NAN, |v| v.im),
            })
            .collect()
    }

    pub fn to_file(&self) -> EstimateFile {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
        EstimateFile {
            dt: self.dt,
            regularization: self.regularization,
            gamma_reg: self.gamma_reg,
            condition: self.condition,
            rank: self.rank,
            g: rows(&self.g),
            h: rows(&self.h),
            k: rows(&self.k),
            mu: self.mu.iter().map(|c| [c.re, c.im]).collect(),
            lambda: self.lambda.iter().map(|l| l.map(|c| [c.re, c.im])).collect(),
            flags: self.flags.clone(),
            eigenvectors: (0..self.eigenvectors.nrows())
                .map(|r| self.eigenvectors.row(r).iter().map(|c| [c.re, c.im]).collect())
                .collect(),
        }
    }

    pub fn from_file(f: &EstimateFile) -> Result<Self> {
        let mat = |rows: &Vec<Vec<f64>>| -> Result<DMatrix<f64>> {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config("estimate matrix is not square".into()));
            }
            Ok(DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied()))
        };
        let n = f.g.len();
        let n_vec = f.eigenvectors.first().map_or(0, |r| r.len());
        if f.eigenvectors.len() != n && n_vec > 0 {
            return Err(Error::Config("eigenvector matrix has wrong row count".into()));
        }
        let eigenvectors = DMatrix::from_row_iterator(
            if n_vec == 0 { n } else { f.eigenvectors.len() },
            n_vec,
            f.eigenvectors.iter().flatten().map(|c| C64::new(c[0], c[1])),
        );
        Ok(Self {
            g: mat(&f.g)?,
            h: mat(&f.h)?,
            k: mat(&f.k)?,
            dt: f.dt,
            mu: f.mu.iter().map(|c| C64::new(c[0], c[1])).collect(),
            lambda: f.lambda.iter().map(|l| l.map(|c| C64::new(c[0], c[1]))).collect(),
            flags: f.flags.clone(),
            eigenvectors,
            regularization: f.regularization,
            gamma_reg: f.gamma_reg,
            condition: f.condition,
            rank: f.rank,
        })
    }
}

/// JSON form of an estimate: row-major matrices, complex numbers as `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub dt: f64,
    pub regularization: f64,
    pub gamma_reg: f64,
    pub condition: f64,
    pub rank: usize,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub mu: Vec<[f64; 2]>,
    pub lambda: Vec<Option<[f64; 2]>>,
    pub flags: Vec<ModeFlag>,
    pub eigenvectors: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueRow {
    pub step: u64,
    pub index: usize,
    pub re_mu: f64,
    pub im_mu: f64,
    pub re_lambda: f64,
    pub im_lambda: f64,
}

/// Per-column scale that maps the largest-modulus entry to `1 + 0i`.
pub fn normalization_scales(phi: &DMatrix<C64>) -> Vec<C64> {
    phi.column_iter()
        .map(|col| {
            let mut best = C64::new(0.0, 0.0);
            for c in col.iter() {
                if c.norm() > best.norm() * (1.0 + 1e-12) {
                    best = *c;
                }
            }
            if best.norm() == 0.0 {
                C64::new(1.0, 0.0)
            } else {
                best
            }
        })
        .collect()
}

fn apply_scales(phi: &mut DMatrix<C64>, scales: &[C64]) {
    for (mut col, s) in phi.column_iter_mut().zip(scales) {
        col.iter_mut().for_each(|c| *c /= *s);
    }
}

fn raw_eigenfunctions(est: &KoopmanEstimate, psi: &DMatrix<f64>) -> Result<DMatrix<C64>> {
    if psi.ncols() != est.size() {
        return Err(Error::shape(format!("psi width {}", est.size()), format!("{}", psi.ncols())));
    }
    let psic: DMatrix<C64> = psi.map(|x| C64::new(x, 0.0));
    Ok(psic * &est.eigenvectors)
}

/// `φ = Ψ Ξ`, each column scaled so its largest-modulus entry over the given
/// points is `1 + 0i`.
pub fn eigenfunction_values(est: &KoopmanEstimate, psi_at_points: &DMatrix<f64>) -> Result<DMatrix<C64>> {
    let mut phi = raw_eigenfunctions(est, psi_at_points)?;
    let scales = normalization_scales(&phi);
    apply_scales(&mut phi, &scales);
    Ok(phi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralConsistencyReport {
    pub total: f64,
    pub per_mode: Vec<f64>,
    pub modes_used: usize,
}

/// `Σ_i Σ_r w_r |φ_i(y_r) − μ_i φ_i(x_r)|²` over the leading `n_modes`
/// non-degenerate modes. Eigenfunctions are normalized on the `x` rows and
/// the same scale is applied to the `y` rows; weights default to `1/m`.
pub fn spectral_consistency(
    est: &KoopmanEstimate,
    psi_x: &DMatrix<f64>,
    psi_y: &DMatrix<f64>,
    weights: Option<&[f64]>,
    n_modes: usize,
) -> Result<SpectralConsistencyReport> {
    if psi_x.shape() != psi_y.shape() {
        return Err(Error::shape(format!("{:?}", psi_x.shape()), format!("{:?}", psi_y.shape())));
    }
    let m = psi_x.nrows();
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != m {
                return Err(Error::shape(format!("{m} weights"), format!("{}", w.len())));
            }
            let s: f64 = w.iter().sum();
            if !(s > 0.0) {
                return Err(Error::InvalidInput("weights must have a positive sum".into()));
            }
            w.iter().map(|v| v / s).collect()
        }
        None => vec![1.0 / m as f64; m],
    };
    let mut phi_x = raw_eigenfunctions(est, psi_x)?;
    let mut phi_y = raw_eigenfunctions(est, psi_y)?;
    let scales = normalization_scales(&phi_x);
    apply_scales(&mut phi_x, &scales);
    apply_scales(&mut phi_y, &scales);

    let modes = est.retained_modes(n_modes);
    let per_mode: Vec<f64> = modes
        .iter()
        .map(|&i| {
            let mu = est.mu[i];
            (0..m).map(|r| w[r] * (phi_y[(r, i)] - mu * phi_x[(r, i)]).norm_sqr()).sum()
        })
        .collect();
    Ok(SpectralConsistencyReport {
        total: per_mode.iter().sum(),
        modes_used: per_mode.len(),
        per_mode,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    Analytic,
    FiniteDiff,
}

/// Dictionary evaluations and generator images for one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluated {
    pub psi_x: DMatrix<f64>,
    pub psi_y: DMatrix<f64>,
    pub psi_prime_x: DMatrix<f64>,
}

pub fn evaluate_data(
    dict: &Dictionary,
    data: &SnapshotData,
    system: Option<&SdeSystem>,
    mode: GeneratorMode,
) -> Result<Evaluated> {
    let psi_x = dict.evaluate(&data.x)?;
    let psi_y = dict.evaluate(&data.y)?;
    let psi_prime_x = match (mode, system) {
        (GeneratorMode::Analytic, Some(sys)) => dict.generator_apply(sys, &data.x)?,
        (GeneratorMode::Analytic, None) => {
            return Err(Error::InvalidInput("analytic generator mode needs the system".into()))
        }
        (GeneratorMode::FiniteDiff, _) => finite_diff_generator(&psi_x, &psi_y, data.dt)?,
    };
    Ok(Evaluated {
        psi_x,
        psi_y,
        psi_prime_x,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub gamma_reg: f64,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub mode: GeneratorMode,
    pub ridge: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma_reg: 0.0,
            epochs: 10,
            batch: 256,
            learning_rate: 1e-3,
            mode: GeneratorMode::FiniteDiff,
            ridge: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dictionary: Dictionary,
    pub estimate: KoopmanEstimate,
    /// `J(θ) = ‖Ψ_Y − Ψ_X K̂‖_F²/m + γ‖K̂‖_F²`, one entry per outer iteration
    /// plus the final value.
    pub losses: Vec<f64>,
}

fn objective(psi_x: &DMatrix<f64>, psi_y: &DMatrix<f64>, k: &DMatrix<f64>, gamma: f64) -> f64 {
    let r = psi_y - psi_x * k;
    r.norm_squared() / psi_x.nrows() as f64 + gamma * k.norm_squared()
}

/// Alternating minimization of `J(θ)`: (a) re-estimate `K̂` with `θ` fixed,
/// (b) one pass of minibatch Adam on `θ` with `K̂` fixed.
pub fn train_dictionary(
    data: &SnapshotData,
    mut dict: Dictionary,
    system: Option<&SdeSystem>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let offset = dict
        .trainable_offset()
        .ok_or_else(|| Error::UnsupportedDictionary(format!("{:?} is not trainable", dict.kind())))?;
    if cfg.batch == 0 {
        return Err(Error::InvalidInput("batch must be positive".into()));
    }
    let opts = KoopmanOptions {
        ridge: cfg.ridge,
        gamma_reg: cfg.gamma_reg,
        n_vectors: None,
        pinv_fallback: true,
    };
    let estimate_for = |dict: &Dictionary| -> Result<(KoopmanEstimate, Evaluated)> {
        let ev = evaluate_data(dict, data, system, cfg.mode)?;
        let (g, h) = build_gram(&ev.psi_x, &ev.psi_prime_x)?;
        Ok((estimate_koopman_with(&g, &h, data.dt, &opts)?, ev))
    };

    let mut optimizer = OptimizerState::adam(cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let m = data.len();
    let d = data.dim();
    let mut order: Vec<usize> = (0..m).collect();

    for epoch in 0..cfg.epochs {
        let (est, ev) = estimate_for(&dict)?;
        losses.push(objective(&ev.psi_x, &ev.psi_y, &est.k, cfg.gamma_reg));
        let k = &est.k;
        let mut rng = stream_rng(cfg.seed, Stream::Dictionary, epoch as u64);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let b = chunk.len();
            let mut stacked = DMatrix::zeros(2 * b, d);
            for (r, &i) in chunk.iter().enumerate() {
                stacked.set_row(r, &data.x.row(i));
                stacked.set_row(b + r, &data.y.row(i));
            }
            let psi = dict.evaluate(&stacked)?;
            let psi_xb = psi.rows(0, b).into_owned();
            let psi_yb = psi.rows(b, b).into_owned();
            let resid = &psi_yb - &psi_xb * k;
            let scale = 2.0 / b as f64;
            let d_psi_y = &resid * scale;
            let d_psi_x = -(&resid * k.transpose()) * scale;
            let net = dict.net_mut().expect("trainable");
            net.forward_train(&stacked)?;
            let n_out = net.output_dim();
            let mut grad_out = DMatrix::zeros(2 * b, n_out);
            grad_out.rows_mut(0, b).copy_from(&d_psi_x.columns(offset, n_out));
            grad_out.rows_mut(b, b).copy_from(&d_psi_y.columns(offset, n_out));
            let grads = net.backward(&grad_out)?;
            optimizer_step(net, &grads, &mut optimizer)?;
        }
    }
    let (estimate, ev) = estimate_for(&dict)?;
    losses.push(objective(&ev.psi_x, &ev.psi_y, &estimate.k, cfg.gamma_reg));
    Ok(TrainOutcome {
        dictionary: dict,
        estimate,
        losses,
    })
}

/// `‖Ĝ − Ĝᵀ‖_max`.
pub fn asymmetry(g: &DMatrix<f64>) -> f64 {
    (g - g.transpose()).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, Mlp};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn gram_trivial_cases() {
        let (g, h) = build_gram(&DMatrix::from_element(1, 1, 1.0), &DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        assert_eq!(h[(0, 0)], 0.0);
        // Orthogonal columns with squared norm m.
        let psi = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let (g, _) = build_gram(&psi, &psi).unwrap();
        assert_eq!(g, DMatrix::identity(2, 2));
    }

    #[test]
    fn gram_matches_loops() {
        let x = random(50, 3, 1);
        let p = random(50, 3, 2);
        let (g, h) = build_gram(&x, &p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (mut gs, mut hs) = (0.0, 0.0);
                for r in 0..50 {
                    gs += x[(r, i)] * x[(r, j)];
                    hs += x[(r, i)] * p[(r, j)];
                }
                assert_abs_diff_eq!(g[(i, j)], gs / 50.0, epsilon = 1e-12);
                assert_abs_diff_eq!(h[(i, j)], hs / 50.0, epsilon = 1e-12);
            }
        }
        assert!(asymmetry(&g) < 1e-12);
    }

    #[test]
    fn accumulator_equals_batch() {
        let x = random(40, 4, 3);
        let p = random(40, 4, 4);
        let mut acc = GramAccumulator::new(4);
        acc.add(&x.rows(0, 15).into_owned(), &p.rows(0, 15).into_owned()).unwrap();
        acc.add(&x.rows(15, 25).into_owned(), &p.rows(15, 25).into_owned()).unwrap();
        let (g, h) = acc.grams().unwrap();
        let (g2, h2) = build_gram(&x, &p).unwrap();
        assert!((g - g2).amax() < 1e-14 && (h - h2).amax() < 1e-14);
    }

    #[test]
    fn constant_observable_steady_state() {
        let est = estimate_koopman(&DMatrix::from_element(1, 1, 1.0), &DMatrix::zeros(1, 1), 0.01, 0.0).unwrap();
        assert_eq!(est.k[(0, 0)], 1.0);
        assert_eq!(est.mu[0], C64::new(1.0, 0.0));
        assert_eq!(est.lambda[0], Some(C64::new(0.0, 0.0)));
    }

    #[test]
    fn singular_gram_is_reported() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let h = DMatrix::zeros(2, 2);
        assert!(matches!(estimate_koopman(&g, &h, 0.1, 0.0), Err(Error::SingularGram { .. })));
        let opts = KoopmanOptions {
            ridge: Some(0.0),
            pinv_fallback: true,
            ..Default::default()
        };
        let est = estimate_koopman_with(&g, &h, 0.1, &opts).unwrap();
        assert_eq!(est.rank, 1);
    }

    #[test]
    fn estimate_invariants_on_random_instance() {
        let x = random(60, 5, 5);
        let p = random(60, 5, 6) * 0.5;
        let (g, h) = build_gram(&x, &p).unwrap();
        let est = estimate_koopman_with(&g, &h, 0.05, &KoopmanOptions::default()).unwrap();
        // Reproducible from stored g, h, dt and ridge.
        let mut a = g.clone();
        for i in 0..5 {
            a[(i, i)] += est.regularization;
        }
        let k = DMatrix::identity(5, 5) + a.lu().solve(&h).unwrap() * 0.05;
        assert!((&k - &est.k).amax() < 1e-10);
        for w in est.mu.windows(2) {
            assert!(w[0].norm() >= w[1].norm());
        }
        assert!(est.max_residual() < 1e-8 * est.k.norm());
        for (m, l) in est.mu.iter().zip(&est.lambda) {
            let l = l.unwrap();
            assert!(((l * est.dt).exp() - m).norm() < 1e-14);
        }
    }

    #[test]
    fn negative_real_mu_is_flagged() {
        let g = DMatrix::identity(1, 1);
        let h = DMatrix::from_element(1, 1, -300.0);
        let est = estimate_koopman(&g, &h, 0.01, 0.0).unwrap();
        assert_abs_diff_eq!(est.mu[0].re, -2.0, epsilon = 1e-12);
        assert_eq!(est.flags[0], ModeFlag::BranchAmbiguous);
        assert_eq!(est.lambda[0], None);
    }

    #[test]
    fn finite_difference_mode_equals_edmd() {
        let psi_x = random(30, 4, 7);
        let psi_y = random(30, 4, 8);
        let dt = 0.1;
        let fd = finite_diff_generator(&psi_x, &psi_y, dt).unwrap();
        let (g, h) = build_gram(&psi_x, &fd).unwrap();
        let est = estimate_koopman(&g, &h, dt, 0.0).unwrap();
        let a = psi_x.tr_mul(&psi_y) / 30.0;
        let edmd = g.clone().lu().solve(&a).unwrap();
        assert!((est.k - edmd).amax() < 1e-10);
    }

    #[test]
    fn eigenfunctions_of_identity_dictionary() {
        let g = DMatrix::identity(2, 2);
        let h = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]);
        let est = estimate_koopman(&g, &h, 0.1, 0.0).unwrap();
        let psi = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -2.0, 1.0, 1.0]);
        let phi = eigenfunction_values(&est, &psi).unwrap();
        for r in 0..3 {
            assert_abs_diff_eq!(phi[(r, 0)].re, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(phi[(r, 1)].re, psi[(r, 1)] / -2.0, epsilon = 1e-14);
        }
        // Idempotent: normalizing normalized values changes nothing.
        let again = {
            let mut p = phi.clone();
            let s = normalization_scales(&p);
            apply_scales(&mut p, &s);
            p
        };
        assert!((again - &phi).iter().all(|c| c.norm() < 1e-15));
    }

    fn linear_case(a: f64, mu_shift: f64) -> (KoopmanEstimate, DMatrix<f64>, DMatrix<f64>) {
        let xs: Vec<f64> = (1..=20).map(|i| i as f64 / 10.0).collect();
        let psi_x = DMatrix::from_column_slice(20, 1, &xs);
        let psi_y = &psi_x * a;
        let dt = 0.1;
        let g = psi_x.tr_mul(&psi_x) / 20.0;
        let h = g.clone() * ((a + mu_shift - 1.0) / dt);
        (estimate_koopman(&g, &h, dt, 0.0).unwrap(), psi_x, psi_y)
    }

    #[test]
    fn consistency_of_exact_and_perturbed_eigenpair() {
        let (est, px, py) = linear_case(0.8, 0.0);
        let exact = spectral_consistency(&est, &px, &py, None, 5).unwrap();
        assert!(exact.total < 1e-28);
        let eta = 0.03;
        let (est, px, py) = linear_case(0.8, eta);
        let rep = spectral_consistency(&est, &px, &py, None, 5).unwrap();
        // φ(x) = x / max x after normalization.
        let mean_sq: f64 = (1..=20).map(|i| (i as f64 / 20.0).powi(2)).sum::<f64>() / 20.0;
        assert_abs_diff_eq!(rep.per_mode[0], eta * eta * mean_sq, epsilon = 1e-14);
        assert_eq!(rep.total, rep.per_mode.iter().sum::<f64>());
    }

    #[test]
    fn zero_epochs_leave_dictionary_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[1, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let dict = Dictionary::trainable(net, true);
        let x = DMatrix::from_fn(50, 1, |i, _| (i as f64 / 25.0) - 1.0);
        let data = SnapshotData::new(x.clone(), &x * 0.9, 1.0, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = train_dictionary(&data, dict.clone(), None, &cfg).unwrap();
        assert_eq!(out.dictionary, dict);
        assert_eq!(out.losses.len(), 1);
    }

    #[test]
    fn untrainable_dictionary_is_rejected() {
        let x = DMatrix::from_element(3, 1, 0.5);
        let data = SnapshotData::new(x.clone(), x, 1.0, 0).unwrap();
        let res = train_dictionary(&data, Dictionary::monomial(1, 2).unwrap(), None, &TrainConfig::default());
        assert!(matches!(res, Err(Error::UnsupportedDictionary(_))));
    }
}
