//! CSV exports: eigenvalues, eigenfunctions on a uniform grid, reward maps.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dictionary::Dictionary;
use crate::env::ActionGrid;
use crate::error::{Error, Result};
use crate::sdmd::{eigenfunction_values, EigenvalueRow, KoopmanEstimate};
use crate::sde::Domain;

fn axis_names(d: usize) -> Vec<String> {
    match d {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        _ => (0..d).map(|i| format!("x{i}")).collect(),
    }
}

/// Uniform grid with `resolution` points per axis including both ends; the
/// first axis varies slowest.
pub fn uniform_grid(domain: &Domain, resolution: usize) -> Result<DMatrix<f64>> {
    if resolution < 2 {
        return Err(Error::InvalidInput(format!("grid resolution must be ≥ 2, got {resolution}")));
    }
    let d = domain.dim();
    let n = resolution.pow(d as u32);
    let mut pts = DMatrix::zeros(n, d);
    for r in 0..n {
        let mut rest = r;
        for axis in (0..d).rev() {
            let i = rest % resolution;
            rest /= resolution;
            pts[(r, axis)] = domain.lower[axis] + domain.width(axis) * i as f64 / (resolution - 1) as f64;
        }
    }
    Ok(pts)
}

/// Eigenfunction table: one row per grid point with coordinates followed by
/// `re_phi_i, im_phi_i` for each requested mode, normalised over the grid.
pub struct EigenfunctionGrid {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn export_eigenfunction_grid(
    est: &KoopmanEstimate,
    dict: &Dictionary,
    domain: &Domain,
    resolution: usize,
    modes: &[usize],
) -> Result<EigenfunctionGrid> {
    if let Some(&m) = modes.iter().find(|&&m| m >= est.n_vectors()) {
        return Err(Error::InvalidInput(format!(
            "mode {m} requested but the estimate holds {} eigenvectors",
            est.n_vectors()
        )));
    }
    let pts = uniform_grid(domain, resolution)?;
    let psi = dict.evaluate(&pts)?;
    let phi = eigenfunction_values(est, &psi)?;
    let mut header = axis_names(domain.dim());
    for m in modes {
        header.push(format!("re_phi_{m}"));
        header.push(format!("im_phi_{m}"));
    }
    let rows = (0..pts.nrows())
        .map(|r| {
            let mut row: Vec<f64> = pts.row(r).iter().copied().collect();
            for &m in modes {
                row.push(phi[(r, m)].re);
                row.push(phi[(r, m)].im);
            }
            row
        })
        .collect();
    Ok(EigenfunctionGrid { header, rows })
}

pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_eigenvalues(path: &Path, rows: &[EigenvalueRow], append: bool) -> Result<()> {
    let exists = path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!(append && exists)).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RewardMapRow {
    pub action: usize,
    pub center: Vec<f64>,
    pub visits: u64,
    pub mean_reward: f64,
    /// Bandit Q, DQN Q at the final observation, or PPO action probability.
    pub agent_value: f64,
}

pub fn reward_map_rows(grid: &ActionGrid, visits: &[u64], reward_sum: &[f64], agent_values: &[f64]) -> Result<Vec<RewardMapRow>> {
    (0..grid.n_actions())
        .map(|a| {
            Ok(RewardMapRow {
                action: a,
                center: grid.cell_center(a)?,
                visits: visits[a],
                mean_reward: if visits[a] > 0 { reward_sum[a] / visits[a] as f64 } else { f64::NAN },
                agent_value: agent_values.get(a).copied().unwrap_or(f64::NAN),
            })
        })
        .collect()
}

pub fn write_reward_map(path: &Path, rows: &[RewardMapRow], dim: usize) -> Result<()> {
    let mut header = vec!["action".to_string()];
    header.extend(axis_names(dim).into_iter().map(|a| format!("center_{a}")));
    header.extend(["visits", "mean_reward", "agent_value"].map(String::from));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.action.to_string()];
        rec.extend(r.center.iter().map(|c| c.to_string()));
        rec.push(r.visits.to_string());
        rec.push(r.mean_reward.to_string());
        rec.push(r.agent_value.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
