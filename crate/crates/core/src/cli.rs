//! Command-line front end. Exit codes: 0 success, 1 configuration error,
//! 2 runtime failure. Errors go to stderr as `error[<Code>]: <message>`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::export::{reward_map_rows, write_eigenvalues, write_reward_map};
use crate::experiment::gradcheck::run_gradcheck;
use crate::experiment::regret::{welch_t_test, RegretSummary};
use crate::experiment::run::{global_estimate, write_eigenfunctions};
use crate::experiment::{
    load_checkpoint, resume_experiment, run_experiment, run_regret_experiment, ExperimentConfig, RegretExperiment,
};
use crate::sde::{builtin_system, simulate_trajectory};

#[derive(Parser, Debug)]
#[command(name = "rsdmd", version, about = "RL-guided sampling for stochastic Koopman spectral estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExportWhat {
    Eigvals,
    Eigfuns,
    Rewardmap,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run an experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides run.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint directory to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// ε-greedy regret study under bounded estimation error.
    Regret {
        /// Comma-separated true arm means.
        #[arg(long, value_delimiter = ',', required = true)]
        arms: Vec<f64>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        horizon: u64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Schedule constant c in ε_t = c/(N·t); defaults to N.
        #[arg(long)]
        c: Option<f64>,
        /// Directory for per-seed curves and the summary.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write every k-th point of each regret curve.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Re-export artifacts from a checkpoint.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        what: ExportWhat,
        /// Output directory; defaults to the checkpoint directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump one Euler–Maruyama trajectory as CSV.
    Simulate {
        #[arg(long)]
        system: String,
        /// Comma-separated initial state.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        x0: Vec<f64>,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// System parameter override `name=value`; repeatable.
        #[arg(long = "param")]
        params: Vec<String>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of network and dictionary derivatives.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Parse and resolve a config without running it.
    ValidateConfig { file: PathBuf },
}

/// Run the CLI on `args` (including the program name) and return the exit
/// code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    apply_thread_cap();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            if e.is_config() {
                1
            } else {
                2
            }
        }
    }
}

/// `RSDMD_THREADS` caps the rayon pool used for trajectory evaluation.
fn apply_thread_cap() {
    if let Some(n) = std::env::var("RSDMD_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if the global pool already exists; that is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, seed, resume } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            let outcome = match resume {
                Some(ck) => resume_experiment(&cfg, &ck)?,
                None => run_experiment(&cfg)?,
            };
            print_json(&serde_json::json!({
                "output_dir": outcome.dir,
                "steps": outcome.steps,
                "leading_mu": outcome.final_estimate.as_ref().map(|e| e.mu.iter().take(5).map(|m| [m.re, m.im]).collect::<Vec<_>>()),
            }))
        }
        Command::Regret {
            arms,
            eps,
            horizon,
            seeds,
            c,
            out,
            stride,
        } => regret(arms, eps, horizon, seeds, c, out, stride.max(1)),
        Command::Export { checkpoint, what, out } => export(&checkpoint, what, out.as_deref()),
        Command::Simulate {
            system,
            x0,
            steps,
            dt,
            seed,
            params,
            out,
        } => simulate(&system, &x0, steps, dt, seed, &params, out.as_deref()),
        Command::Gradcheck { seeds } => {
            let report = run_gradcheck(seeds)?;
            print_json(&report)?;
            if report.passed {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!(
                    "derivative check failed: max relative error {:.3e} ≥ {:.0e}",
                    report.max_rel_error, report.tolerance
                )))
            }
        }
        Command::ValidateConfig { file } => {
            let resolved = ExperimentConfig::load(&file)?.resolve()?;
            println!("{}", resolved.to_json_pretty()?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct RegretReport {
    runs: Vec<RegretSummary>,
    mean_final_regret: f64,
    mean_last_half_slope: f64,
}

fn regret(arms: Vec<f64>, eps: f64, horizon: u64, seeds: u64, c: Option<f64>, out: Option<PathBuf>, stride: usize) -> Result<()> {
    let spec = RegretExperiment {
        true_means: arms,
        eps_sdmd: eps,
        c,
        horizon,
    };
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut runs = Vec::new();
    for seed in 0..seeds {
        let run = run_regret_experiment(&spec, seed)?;
        if let Some(dir) = &out {
            let path = dir.join(format!("regret_seed{seed}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["t", "cumulative_regret"])?;
            for (i, r) in run.cumulative.iter().enumerate().filter(|(i, _)| (i + 1) % stride == 0) {
                w.write_record([(i + 1).to_string(), r.to_string()])?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        runs.push(run.summary);
    }
    let n = runs.len().max(1) as f64;
    let report = RegretReport {
        mean_final_regret: runs.iter().map(|r| r.final_regret).sum::<f64>() / n,
        mean_last_half_slope: runs.iter().map(|r| r.linear_fit_last_half.slope).sum::<f64>() / n,
        runs,
    };
    if let Some(dir) = &out {
        let p = dir.join("summary.json");
        std::fs::write(&p, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&p, e))?;
    }
    print_json(&report)
}

/// Welch comparison of last-half slopes between two regret regimes.
pub fn compare_regimes(a: &[RegretSummary], b: &[RegretSummary]) -> Result<crate::experiment::regret::WelchResult> {
    let slopes = |v: &[RegretSummary]| v.iter().map(|r| r.linear_fit_last_half.slope).collect::<Vec<_>>();
    welch_t_test(&slopes(a), &slopes(b))
}

fn export(checkpoint: &Path, what: ExportWhat, out: Option<&Path>) -> Result<()> {
    let (meta, env, agent) = load_checkpoint(checkpoint, None)?;
    let dir = out.unwrap_or(checkpoint);
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = match what {
        ExportWhat::Eigvals | ExportWhat::Eigfuns => {
            let est = global_estimate(&env, &meta.config)?
                .ok_or(Error::InsufficientData { needed: 1, available: 0 })?;
            if what == ExportWhat::Eigvals {
                let p = dir.join("eigenvalues.csv");
                write_eigenvalues(&p, &est.eigenvalue_rows(meta.step), false)?;
                p
            } else {
                let p = dir.join(format!("eigenfunctions_step{}.csv", meta.step));
                write_eigenfunctions(&p, &est, &env, &meta.config)?;
                p
            }
        }
        ExportWhat::Rewardmap => {
            let p = dir.join("reward_map.csv");
            let grid = &env.config().grid;
            let values = agent.action_values(&crate::env::Environment::observation(&env))?;
            let rows = reward_map_rows(grid, &meta.visits, &meta.reward_sum, &values)?;
            write_reward_map(&p, &rows, grid.dim())?;
            p
        }
    };
    print_json(&serde_json::json!({ "written": path, "step": meta.step }))
}

fn simulate(name: &str, x0: &[f64], steps: usize, dt: f64, seed: u64, params: &[String], out: Option<&Path>) -> Result<()> {
    let mut map = BTreeMap::new();
    for p in params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--param expects name=value, got `{p}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("--param {k}: `{v}` is not a number")))?;
        map.insert(k.trim().to_string(), v);
    }
    let system = builtin_system(name, &map)?;
    let data = simulate_trajectory(&system, x0, steps, dt, seed)?;
    let d = system.dim();
    let write = |w: &mut dyn std::io::Write| -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("x{i}")));
        csv.write_record(&header)?;
        let mut row = |k: usize, state: Vec<f64>| -> Result<()> {
            let mut rec = vec![(k as f64 * dt).to_string()];
            rec.extend(state.iter().map(|v| v.to_string()));
            csv.write_record(&rec)?;
            Ok(())
        };
        row(0, data.x.row(0).iter().copied().collect())?;
        for k in 0..data.len() {
            row(k + 1, data.y.row(k).iter().copied().collect())?;
        }
        csv.flush().map_err(|e| Error::io("<output>", e))
    };
    match out {
        Some(path) => {
            let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            write(&mut f)
        }
        None => write(&mut std::io::stdout().lock()),
    }
}
