//! Versioned JSON experiment configuration.
//!
//! Parsing rejects unknown keys. [`ExperimentConfig::resolve`] fills every
//! default that depends on other fields, so the resolved file written next
//! to a run's outputs is complete.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{DqnConfig, PpoConfig};
use crate::dictionary::Dictionary;
use crate::env::{ActionGrid, DictionaryLearning, EnvConfig, RewardConfig};
use crate::error::{Error, Result};
use crate::neural::{Activation, Mlp};
use crate::rng::{stream_rng, Stream};
use crate::sdmd::{GeneratorMode, TrainConfig};
use crate::sde::{builtin_system, default_params, Domain, SdeSystem};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub system: SystemBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub dictionary: DictionaryBlock,
    #[serde(default)]
    pub agent: AgentBlock,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub run: RunBlock,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Euler–Maruyama steps per trajectory.
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    /// State-space box; defaults to the system's built-in domain.
    #[serde(default)]
    pub domain: Option<Domain>,
}

fn default_dt() -> f64 {
    0.01
}

fn default_n_steps() -> usize {
    300
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    /// Cells per axis.
    pub k: usize,
    /// Defaults to the system domain.
    pub domain: Option<Domain>,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { k: 32, domain: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryChoice {
    Rbf,
    Monomial,
    Hermite,
    Trainable,
}

/// Fields irrelevant to the chosen kind are ignored but still recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DictionaryBlock {
    pub kind: DictionaryChoice,
    /// RBF centers per axis.
    pub per_axis: usize,
    /// RBF bandwidth per axis; defaults to the center spacing.
    pub bandwidth: Option<Vec<f64>>,
    /// Maximum total degree for polynomial families.
    pub degree: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub include_state: bool,
    /// Train a trainable dictionary during the run.
    pub learn: bool,
    pub training: TrainingBlock,
    pub generator: GeneratorMode,
    /// Tikhonov ridge on G; `null` uses 1e-8·tr(G)/N.
    pub ridge: Option<f64>,
}

impl Default for DictionaryBlock {
    fn default() -> Self {
        Self {
            kind: DictionaryChoice::Rbf,
            per_axis: 10,
            bandwidth: None,
            degree: 2,
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            include_state: true,
            learn: true,
            training: TrainingBlock::default(),
            generator: GeneratorMode::Analytic,
            ridge: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingBlock {
    pub gamma_reg: f64,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub mode: GeneratorMode,
    /// Snapshot pairs kept for the run-level estimate.
    pub reservoir: usize,
}

impl Default for TrainingBlock {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            gamma_reg: t.gamma_reg,
            epochs: t.epochs,
            batch: t.batch,
            learning_rate: t.learning_rate,
            mode: t.mode,
            reservoir: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Bandit,
    Dqn,
    Ppo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentBlock {
    pub kind: AgentKind,
    /// State-window length ℓ; defaults to 0 for the bandit and 4 otherwise.
    pub window: Option<usize>,
    /// Bandit exploration rate.
    pub epsilon: f64,
    /// Bandit initial Q value.
    pub q_init: f64,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
}

impl Default for AgentBlock {
    fn default() -> Self {
        Self {
            kind: AgentKind::Bandit,
            window: None,
            epsilon: 0.35,
            q_init: 0.0,
            dqn: DqnConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub t_max: u64,
    pub seed: u64,
    /// Relative paths are taken under `RSDMD_OUTPUT_ROOT` when it is set.
    pub output_dir: PathBuf,
    /// Checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
    /// Steps (counted after the step completes) at which eigenvalues and
    /// eigenfunctions are exported; the final step is always exported.
    pub export_steps: Vec<u64>,
    /// Evaluation points per axis of the eigenfunction grid.
    pub eigenfunction_resolution: usize,
    pub export_modes: usize,
    /// Add elapsed wall time to each step-log line (breaks byte equality
    /// between otherwise identical runs).
    pub record_wall_time: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            t_max: 4000,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            checkpoint_every: 500,
            export_steps: vec![100, 500, 2000, 4000],
            eigenfunction_resolution: 41,
            export_modes: 3,
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(inner) => Error::Config(format!("{}: {inner}", path.display())),
            other => other,
        })
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn build_system(&self) -> Result<SdeSystem> {
        let system = builtin_system(&self.system.name, &self.system.params)?;
        match &self.system.domain {
            Some(d) => system.with_domain(Domain::new(d.lower.clone(), d.upper.clone())?),
            None => Ok(system),
        }
    }

    /// Validate and fill every derived default.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut out = self.clone();
        let system = self.build_system()?;
        let table = default_params(&self.system.name)?;
        out.system.params = table
            .iter()
            .map(|(k, v)| ((*k).to_string(), self.system.params.get(*k).copied().unwrap_or(*v)))
            .collect();
        out.system.domain = Some(system.domain.clone());
        if !(self.system.dt > 0.0) || self.system.n_steps == 0 {
            return Err(Error::Config("system.dt and system.n_steps must be positive".into()));
        }

        if self.grid.k == 0 {
            return Err(Error::Config("grid.k must be positive".into()));
        }
        let grid_domain = match &self.grid.domain {
            Some(d) => Domain::new(d.lower.clone(), d.upper.clone())?,
            None => system.domain.clone(),
        };
        if grid_domain.dim() != system.dim() {
            return Err(Error::Config("grid.domain dimension differs from the system".into()));
        }
        out.grid.domain = Some(grid_domain.clone());

        let dict = &self.dictionary;
        if dict.kind == DictionaryChoice::Rbf {
            if dict.per_axis == 0 {
                return Err(Error::Config("dictionary.per_axis must be positive".into()));
            }
            let bw = match &dict.bandwidth {
                Some(b) if b.len() != system.dim() || b.iter().any(|v| !(*v > 0.0)) => {
                    return Err(Error::Config("dictionary.bandwidth needs one positive value per axis".into()))
                }
                Some(b) => b.clone(),
                None => (0..system.dim()).map(|i| system.domain.width(i) / dict.per_axis as f64).collect(),
            };
            out.dictionary.bandwidth = Some(bw);
        }
        if let Some(r) = dict.ridge {
            if !(r >= 0.0) {
                return Err(Error::Config("dictionary.ridge must be non-negative".into()));
            }
        }

        let window = self.agent.window.unwrap_or(match self.agent.kind {
            AgentKind::Bandit => 0,
            _ => 4,
        });
        if window == 0 && self.agent.kind != AgentKind::Bandit {
            return Err(Error::Config("dqn and ppo need agent.window ≥ 1".into()));
        }
        out.agent.window = Some(window);
        if !(0.0..=1.0).contains(&self.agent.epsilon) {
            return Err(Error::Config("agent.epsilon must lie in [0, 1]".into()));
        }
        match self.agent.kind {
            AgentKind::Dqn => self.agent.dqn.validate()?,
            AgentKind::Ppo => self.agent.ppo.validate()?,
            AgentKind::Bandit => {}
        }

        let k = self.grid.k as f64;
        out.reward.bandwidth = Some(self.reward.bandwidth.unwrap_or(grid_domain.diagonal() / (2.0 * k)));
        if !(out.reward.bandwidth.unwrap() > 0.0) || !(self.reward.eps_kde > 0.0) || self.reward.n_modes == 0 {
            return Err(Error::Config("reward.bandwidth, reward.eps_kde and reward.n_modes must be positive".into()));
        }
        if self.run.eigenfunction_resolution < 2 {
            return Err(Error::Config("run.eigenfunction_resolution must be at least 2".into()));
        }
        Ok(out)
    }

    /// Output directory after applying `RSDMD_OUTPUT_ROOT`.
    pub fn output_dir(&self) -> PathBuf {
        let dir = &self.run.output_dir;
        match std::env::var_os("RSDMD_OUTPUT_ROOT") {
            Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
            _ => dir.clone(),
        }
    }

    pub fn window(&self) -> usize {
        self.agent.window.unwrap_or(0)
    }

    pub fn build_dictionary(&self, system: &SdeSystem) -> Result<Dictionary> {
        let d = &self.dictionary;
        let dim = system.dim();
        match d.kind {
            DictionaryChoice::Rbf => Dictionary::rbf_grid(&system.domain, d.per_axis, d.bandwidth.clone()),
            DictionaryChoice::Monomial => Dictionary::monomial(dim, d.degree),
            DictionaryChoice::Hermite => Dictionary::hermite(dim, d.degree),
            DictionaryChoice::Trainable => {
                let mut sizes = vec![dim];
                sizes.extend(&d.hidden);
                let out = *sizes.last().unwrap();
                if d.hidden.is_empty() || out == 0 {
                    return Err(Error::Config("trainable dictionary needs non-empty hidden layers".into()));
                }
                // The final hidden width is the number of learned features.
                let mut rng = stream_rng(self.run.seed, Stream::Init, 1);
                let net = Mlp::new(&sizes, d.activation, &mut rng)?;
                Ok(Dictionary::trainable(net, d.include_state))
            }
        }
    }

    /// Environment configuration; call on a resolved config.
    pub fn env_config(&self) -> Result<EnvConfig> {
        let system = self.build_system()?;
        let domain = self.grid.domain.clone().unwrap_or_else(|| system.domain.clone());
        let grid = ActionGrid::new(self.grid.k, domain)?;
        let dictionary = self.build_dictionary(&system)?;
        let learning = (self.dictionary.kind == DictionaryChoice::Trainable && self.dictionary.learn).then(|| {
            let t = &self.dictionary.training;
            DictionaryLearning {
                train: TrainConfig {
                    gamma_reg: t.gamma_reg,
                    epochs: t.epochs,
                    batch: t.batch,
                    learning_rate: t.learning_rate,
                    mode: t.mode,
                    ridge: self.dictionary.ridge,
                    seed: self.run.seed,
                },
                reservoir: t.reservoir,
            }
        });
        Ok(EnvConfig {
            system,
            dt: self.system.dt,
            n_steps: self.system.n_steps,
            grid,
            window: self.window(),
            dictionary,
            generator: self.dictionary.generator,
            reward: self.reward.clone(),
            ridge: self.dictionary.ridge,
            learning,
            seed: self.run.seed,
        })
    }
}
