//! ε-greedy regret under a bounded reward-estimation error, with a decaying
//! exploration schedule `ε_t = c/(N·t)`.
//!
//! Each step draws fresh estimates `R̂_a = R_a + U(−ε_sdmd, ε_sdmd)` for every
//! arm; exploitation picks `argmax R̂`. Regret is the pseudo-regret
//! `Σ Δ_{a_t}` with the true gaps.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::agents::bandit::argmax;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegretExperiment {
    pub true_means: Vec<f64>,
    /// Uniform bound on the per-pull estimation error.
    pub eps_sdmd: f64,
    /// Schedule constant; `None` means the number of arms (so `ε_1 = 1`).
    #[serde(default)]
    pub c: Option<f64>,
    pub horizon: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapReport {
    pub delta_min: f64,
    pub eps_sdmd: f64,
    /// `ε_sdmd < Δ_min / 2`.
    pub holds: bool,
}

/// Smallest gap between the best mean and any strictly worse arm.
pub fn validate_assumption_gap(true_means: &[f64], eps_sdmd: f64) -> Result<GapReport> {
    if true_means.len() < 2 {
        return Err(Error::InvalidInput("need at least two arms".into()));
    }
    if true_means.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidInput("arm means must be finite".into()));
    }
    let best = true_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let delta_min = true_means
        .iter()
        .map(|m| best - m)
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !delta_min.is_finite() {
        return Err(Error::DegenerateArms);
    }
    Ok(GapReport {
        delta_min,
        eps_sdmd,
        holds: eps_sdmd < delta_min / 2.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ intercept + slope·x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LinearFit {
        intercept: my - slope * mx,
        slope,
        r_squared,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegretSummary {
    pub seed: u64,
    pub horizon: u64,
    pub gap: GapReport,
    pub final_regret: f64,
    /// Mean per-step regret over the first and last tenth of the horizon.
    pub first_decade_rate: f64,
    pub final_decade_rate: f64,
    /// `R_T ≈ a + b·ln t` over the whole run.
    pub log_fit: LinearFit,
    /// `R_T ≈ a + b·t` over the last half of the run.
    pub linear_fit_last_half: LinearFit,
}

#[derive(Clone, Debug)]
pub struct RegretRun {
    /// Cumulative regret after each step `t = 1..=T`.
    pub cumulative: Vec<f64>,
    pub summary: RegretSummary,
}

pub fn run_regret_experiment(spec: &RegretExperiment, seed: u64) -> Result<RegretRun> {
    let gap = validate_assumption_gap(&spec.true_means, spec.eps_sdmd)?;
    if spec.horizon < 1000 {
        return Err(Error::InvalidInput(format!("regret horizon must be ≥ 1000, got {}", spec.horizon)));
    }
    if !(spec.eps_sdmd >= 0.0) {
        return Err(Error::InvalidInput("eps_sdmd must be non-negative".into()));
    }
    let n = spec.true_means.len();
    let c = spec.c.unwrap_or(n as f64);
    if !(c > 0.0) {
        return Err(Error::InvalidInput("schedule constant c must be positive".into()));
    }
    let best = spec.true_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut rng = stream_rng(seed, Stream::Regret, 0);
    let mut estimates = vec![0.0; n];
    let mut cumulative = Vec::with_capacity(spec.horizon as usize);
    let mut total = 0.0;
    for t in 1..=spec.horizon {
        let eps_t = (c / (n as f64 * t as f64)).min(1.0);
        let action = if rng.random::<f64>() < eps_t {
            rng.random_range(0..n)
        } else {
            for (e, m) in estimates.iter_mut().zip(&spec.true_means) {
                *e = m + if spec.eps_sdmd > 0.0 {
                    rng.random_range(-spec.eps_sdmd..=spec.eps_sdmd)
                } else {
                    0.0
                };
            }
            argmax(&estimates)
        };
        total += best - spec.true_means[action];
        cumulative.push(total);
    }

    let horizon = spec.horizon as usize;
    let tenth = horizon / 10;
    let first_decade_rate = cumulative[tenth - 1] / tenth as f64;
    let final_decade_rate = (cumulative[horizon - 1] - cumulative[horizon - tenth - 1]) / tenth as f64;
    let ts: Vec<f64> = (1..=horizon).map(|t| t as f64).collect();
    let log_t: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let half = horizon / 2;
    let summary = RegretSummary {
        seed,
        horizon: spec.horizon,
        gap,
        final_regret: total,
        first_decade_rate,
        final_decade_rate,
        log_fit: linear_fit(&log_t, &cumulative),
        linear_fit_last_half: linear_fit(&ts[half..], &cumulative[half..]),
    };
    Ok(RegretRun { cumulative, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Welch's unequal-variance t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: a.len().min(b.len()),
        });
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, var)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        return Ok(WelchResult {
            t: if ma == mb { 0.0 } else { f64::INFINITY.copysign(ma - mb) },
            df: na + nb - 2.0,
            p_value: p,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidInput(format!("t distribution: {e}")))?;
    let p_value = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(WelchResult { t, df, p_value })
}
