//! Training loop, run-directory layout, checkpoints and resume.
//!
//! Run directory:
//! ```text
//! resolved_config.json
//! steps.jsonl                   one StepInfo per line
//! eigenvalues.csv               global estimate at each export step
//! eigenfunctions_step<T>.csv    eigenfunctions on a uniform grid
//! reward_map.csv                per-cell visits, mean reward, agent value
//! final_estimate.json
//! checkpoints/step_<T>/{agent/, dictionary/, meta.json}
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{AgentKind, ExperimentConfig, CONFIG_VERSION};
use super::export::{
    export_eigenfunction_grid, reward_map_rows, write_eigenvalues, write_reward_map, write_table,
};
use crate::agents::{softmax, Agent, BanditAgent, DqnAgent, PpoAgent, Transition};
use crate::dictionary::Dictionary;
use crate::env::{Environment, EnvState, SdmdEnv, StepInfo};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::sdmd::KoopmanEstimate;

/// One of the three agent families, with persistence.
#[derive(Clone, Debug)]
pub enum AnyAgent {
    Bandit(BanditAgent),
    Dqn(DqnAgent),
    Ppo(PpoAgent),
}

impl AnyAgent {
    pub fn build(cfg: &ExperimentConfig, obs_dim: usize, n_actions: usize) -> Result<Self> {
        let a = &cfg.agent;
        let mut rng = stream_rng(cfg.run.seed, Stream::Init, 0);
        Ok(match a.kind {
            AgentKind::Bandit => AnyAgent::Bandit(BanditAgent::new(n_actions, a.epsilon, a.q_init)?),
            AgentKind::Dqn => AnyAgent::Dqn(DqnAgent::new(obs_dim, n_actions, a.dqn.clone(), &mut rng)?),
            AgentKind::Ppo => AnyAgent::Ppo(PpoAgent::new(obs_dim, n_actions, a.ppo.clone(), &mut rng)?),
        })
    }

    pub fn as_agent(&mut self) -> &mut dyn Agent {
        match self {
            AnyAgent::Bandit(a) => a,
            AnyAgent::Dqn(a) => a,
            AnyAgent::Ppo(a) => a,
        }
    }

    /// Per-action value used in the reward map.
    pub fn action_values(&self, observation: &[f64]) -> Result<Vec<f64>> {
        match self {
            AnyAgent::Bandit(a) => Ok(a.q.clone()),
            AnyAgent::Dqn(a) => a.q_values(observation),
            AnyAgent::Ppo(a) => Ok(softmax(&a.actor.forward_row(observation)?)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        match self {
            AnyAgent::Bandit(a) => a.save_csv(&dir.join("bandit.csv")),
            AnyAgent::Dqn(a) => a.save_json(&dir.join("dqn.json")),
            AnyAgent::Ppo(a) => a.save_json(&dir.join("ppo.json")),
        }
    }

    pub fn load(dir: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        Ok(match cfg.agent.kind {
            AgentKind::Bandit => AnyAgent::Bandit(BanditAgent::load_csv(&dir.join("bandit.csv"), cfg.agent.epsilon, cfg.agent.q_init)?),
            AgentKind::Dqn => AnyAgent::Dqn(DqnAgent::load_json(&dir.join("dqn.json"))?),
            AgentKind::Ppo => AnyAgent::Ppo(PpoAgent::load_json(&dir.join("ppo.json"))?),
        })
    }
}

/// Checkpoint metadata; the agent and dictionary live in sibling folders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub version: u32,
    pub step: u64,
    pub config: ExperimentConfig,
    pub env: EnvState,
    pub visits: Vec<u64>,
    pub reward_sum: Vec<f64>,
}

#[derive(Serialize)]
struct StepLine<'a> {
    #[serde(flatten)]
    info: &'a StepInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub steps: u64,
    pub env: SdmdEnv,
    pub agent: AnyAgent,
    /// Run-level estimate; `None` when no step produced data.
    pub final_estimate: Option<KoopmanEstimate>,
}

struct Runner {
    cfg: ExperimentConfig,
    dir: PathBuf,
    env: SdmdEnv,
    agent: AnyAgent,
    visits: Vec<u64>,
    reward_sum: Vec<f64>,
    start: u64,
}

/// Run a fresh experiment. `cfg` is resolved first.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let cfg = cfg.resolve()?;
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let env = SdmdEnv::new(cfg.env_config()?)?;
    let agent = AnyAgent::build(&cfg, env.observation_dim(), env.n_actions())?;
    let n = env.n_actions();
    for stale in ["steps.jsonl", "eigenvalues.csv"] {
        let p = dir.join(stale);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Runner {
        cfg,
        dir,
        env,
        agent,
        visits: vec![0; n],
        reward_sum: vec![0.0; n],
        start: 0,
    }
    .run()
}

/// Continue from a checkpoint directory. The checkpoint's configuration must
/// match `cfg` except for the run horizon, output directory and checkpoint
/// cadence.
pub fn resume_experiment(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<RunOutcome> {
    let cfg = cfg.resolve()?;
    let (meta, env, agent) = load_checkpoint(checkpoint, Some(&cfg))?;
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    truncate_step_log(&dir.join("steps.jsonl"), meta.step)?;
    truncate_eigenvalues(&dir.join("eigenvalues.csv"), meta.step)?;
    Runner {
        cfg,
        dir,
        env,
        agent,
        visits: meta.visits,
        reward_sum: meta.reward_sum,
        start: meta.step,
    }
    .run()
}

fn comparable(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.run.t_max = 0;
    c.run.output_dir = PathBuf::new();
    c.run.checkpoint_every = 0;
    c
}

/// Load a checkpoint; with `expected`, reject one written under a different
/// configuration.
pub fn load_checkpoint(dir: &Path, expected: Option<&ExperimentConfig>) -> Result<(CheckpointMeta, SdmdEnv, AnyAgent)> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    if meta.version != CONFIG_VERSION {
        return Err(Error::Config(format!("checkpoint version {} unsupported", meta.version)));
    }
    if let Some(cfg) = expected {
        if comparable(cfg) != comparable(&meta.config) {
            return Err(Error::Config(format!(
                "{}: checkpoint was written with a different configuration",
                dir.display()
            )));
        }
    }
    let dictionary = Dictionary::load_json(&dir.join("dictionary").join("dictionary.json"))?;
    let env = SdmdEnv::restore(meta.config.env_config()?, &meta.env, dictionary)?;
    let agent = AnyAgent::load(&dir.join("agent"), &meta.config)?;
    if agent.action_values(&env.observation())?.len() != env.n_actions() {
        return Err(Error::ArchitectureMismatch("checkpoint agent does not match the action grid".into()));
    }
    Ok((meta, env, agent))
}

fn truncate_step_log(path: &Path, keep_below: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut kept = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value = serde_json::from_str(&line)?;
        if v["step"].as_u64().is_some_and(|s| s < keep_below) {
            kept.push(line);
        }
    }
    let mut out = kept.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn truncate_eigenvalues(path: &Path, keep_through: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let mut r = csv::Reader::from_path(path)?;
    let rows: Vec<crate::sdmd::EigenvalueRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    let kept: Vec<_> = rows.into_iter().filter(|row| row.step <= keep_through).collect();
    write_eigenvalues(path, &kept, false)
}

impl Runner {
    fn run(mut self) -> Result<RunOutcome> {
        let cfg = self.cfg.clone();
        fs::write(self.dir.join("resolved_config.json"), cfg.to_json_pretty()?)
            .map_err(|e| Error::io(self.dir.join("resolved_config.json"), e))?;
        let log_path = self.dir.join("steps.jsonl");
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        let mut log = BufWriter::new(file);
        let seed = cfg.run.seed;
        let clock = Instant::now();
        let mut last_export = None;

        for t in self.start..cfg.run.t_max {
            let obs = self.env.observation();
            let action = self.agent.as_agent().select(&obs, &mut stream_rng(seed, Stream::Agent, t))?;
            let info = self.env.step(action)?;
            let next = self.env.observation();
            let reward = info.reward.total;
            self.agent.as_agent().observe(
                Transition {
                    state: obs,
                    action,
                    reward,
                    next_state: next,
                },
                &mut stream_rng(seed, Stream::Replay, t),
            )?;
            self.visits[action] += 1;
            self.reward_sum[action] += reward;

            let line = StepLine {
                info: &info,
                wall_time_s: cfg.run.record_wall_time.then(|| clock.elapsed().as_secs_f64()),
            };
            serde_json::to_writer(&mut log, &line)?;
            log.write_all(b"\n").map_err(|e| Error::io(&log_path, e))?;

            let done = t + 1;
            if cfg.run.export_steps.contains(&done) {
                self.export_spectrum(done)?;
                last_export = Some(done);
            }
            if cfg.run.checkpoint_every > 0 && done % cfg.run.checkpoint_every == 0 {
                log.flush().map_err(|e| Error::io(&log_path, e))?;
                self.checkpoint(done)?;
            }
        }
        log.flush().map_err(|e| Error::io(&log_path, e))?;

        let steps = self.env.step_count();
        if steps > 0 && last_export != Some(steps) && !cfg.run.export_steps.contains(&steps) {
            self.export_spectrum(steps)?;
        }
        if !self.dir.join("eigenvalues.csv").exists() {
            write_eigenvalues(&self.dir.join("eigenvalues.csv"), &[], false)?;
        }
        self.write_reward_map(&self.dir.join("reward_map.csv"))?;
        let final_estimate = self.global_estimate()?;
        if let Some(est) = &final_estimate {
            let p = self.dir.join("final_estimate.json");
            fs::write(&p, serde_json::to_string(&est.to_file())?).map_err(|e| Error::io(&p, e))?;
        }
        self.checkpoint(steps)?;
        Ok(RunOutcome {
            dir: self.dir,
            steps,
            env: self.env,
            agent: self.agent,
            final_estimate,
        })
    }

    fn global_estimate(&self) -> Result<Option<KoopmanEstimate>> {
        global_estimate(&self.env, &self.cfg)
    }

    fn export_spectrum(&self, step: u64) -> Result<()> {
        let Some(est) = self.global_estimate()? else { return Ok(()) };
        let eig_path = self.dir.join("eigenvalues.csv");
        write_eigenvalues(&eig_path, &est.eigenvalue_rows(step), true)?;
        write_eigenfunctions(&self.dir.join(format!("eigenfunctions_step{step}.csv")), &est, &self.env, &self.cfg)
    }

    fn write_reward_map(&self, path: &Path) -> Result<()> {
        write_reward_map_for(path, &self.env, &self.agent, &self.visits, &self.reward_sum)
    }

    fn checkpoint(&self, step: u64) -> Result<PathBuf> {
        let dir = self.dir.join("checkpoints").join(format!("step_{step}"));
        save_checkpoint(&dir, step, &self.cfg, &self.env, &self.agent, &self.visits, &self.reward_sum)?;
        Ok(dir)
    }
}

pub fn global_estimate(env: &SdmdEnv, cfg: &ExperimentConfig) -> Result<Option<KoopmanEstimate>> {
    if env.step_count() == 0 && env.window_points().is_empty() {
        return Ok(None);
    }
    let n_vec = cfg.run.export_modes.max(cfg.reward.n_modes).min(env.dictionary().size());
    match env.global_estimate(n_vec) {
        Ok(est) => Ok(Some(est)),
        Err(Error::InsufficientData { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn write_eigenfunctions(path: &Path, est: &KoopmanEstimate, env: &SdmdEnv, cfg: &ExperimentConfig) -> Result<()> {
    let modes: Vec<usize> = (0..cfg.run.export_modes.min(est.n_vectors())).collect();
    let table = export_eigenfunction_grid(
        est,
        env.dictionary(),
        &env.config().grid.domain,
        cfg.run.eigenfunction_resolution,
        &modes,
    )?;
    write_table(path, &table.header, &table.rows)
}

pub fn write_reward_map_for(path: &Path, env: &SdmdEnv, agent: &AnyAgent, visits: &[u64], reward_sum: &[f64]) -> Result<()> {
    let values = agent.action_values(&env.observation())?;
    let grid = &env.config().grid;
    let rows = reward_map_rows(grid, visits, reward_sum, &values)?;
    write_reward_map(path, &rows, grid.dim())
}

pub fn save_checkpoint(
    dir: &Path,
    step: u64,
    cfg: &ExperimentConfig,
    env: &SdmdEnv,
    agent: &AnyAgent,
    visits: &[u64],
    reward_sum: &[f64],
) -> Result<()> {
    let dict_dir = dir.join("dictionary");
    fs::create_dir_all(&dict_dir).map_err(|e| Error::io(&dict_dir, e))?;
    agent.save(&dir.join("agent"))?;
    env.dictionary().save_json(&dict_dir.join("dictionary.json"))?;
    let meta = CheckpointMeta {
        version: CONFIG_VERSION,
        step,
        config: cfg.clone(),
        env: env.state(),
        visits: visits.to_vec(),
        reward_sum: reward_sum.to_vec(),
    };
    let p = dir.join("meta.json");
    fs::write(&p, serde_json::to_string(&meta)?).map_err(|e| Error::io(&p, e))
}
