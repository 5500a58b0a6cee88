//! Deep Q-network with experience replay and a soft-updated target network.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::bandit::argmax;
use super::replay::{ReplayBuffer, Transition};
use super::Agent;
use crate::error::{Error, Result};
use crate::neural::{
    clip_gradients, huber_loss, optimizer_step, soft_update, Activation, Mlp, MlpCheckpoint, OptimizerKind,
    OptimizerSnapshot, OptimizerState,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Time constant of the exponential ε decay, in steps.
    pub epsilon_decay: f64,
    pub batch_size: usize,
    /// Updates begin once the replay holds this many transitions.
    pub learning_starts: usize,
    pub replay_capacity: usize,
    pub huber_delta: f64,
    pub grad_clip: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            activation: Activation::Relu,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            gamma: 0.99,
            tau: 0.05,
            epsilon_start: 0.9,
            epsilon_end: 0.05,
            epsilon_decay: 1000.0,
            batch_size: 64,
            learning_starts: 200,
            replay_capacity: 20_000,
            huber_delta: 1.0,
            grad_clip: 100.0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("dqn: {msg}")));
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return bad("epsilon values must lie in [0, 1]");
            }
        }
        if !(self.epsilon_decay > 0.0) {
            return bad("epsilon_decay must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("need 0 < batch_size <= replay_capacity");
        }
        if !(self.learning_rate > 0.0 && self.huber_delta > 0.0 && self.grad_clip > 0.0) {
            return bad("learning_rate, huber_delta and grad_clip must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DqnAgent {
    pub cfg: DqnConfig,
    pub policy: Mlp,
    pub target: Mlp,
    pub replay: ReplayBuffer,
    pub optimizer: OptimizerState,
    /// Number of `select` calls so far; drives the ε schedule.
    pub steps: u64,
    pub updates: u64,
}

impl DqnAgent {
    pub fn new(obs_dim: usize, n_actions: usize, cfg: DqnConfig, rng: &mut dyn RngCore) -> Result<Self> {
        cfg.validate()?;
        if obs_dim == 0 {
            return Err(Error::Config("dqn needs a non-empty observation (window ≥ 1)".into()));
        }
        if n_actions == 0 {
            return Err(Error::Config("dqn needs at least one action".into()));
        }
        let mut sizes = vec![obs_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(n_actions);
        let policy = Mlp::new(&sizes, cfg.activation, rng)?;
        let target = policy.clone();
        Ok(Self {
            replay: ReplayBuffer::new(cfg.replay_capacity)?,
            optimizer: OptimizerState::new(cfg.optimizer, cfg.learning_rate),
            cfg,
            policy,
            target,
            steps: 0,
            updates: 0,
        })
    }

    /// `ε_t = ε_end + (ε_start − ε_end)·exp(−t/decay)`.
    pub fn epsilon_at(&self, t: u64) -> f64 {
        self.cfg.epsilon_end + (self.cfg.epsilon_start - self.cfg.epsilon_end) * (-(t as f64) / self.cfg.epsilon_decay).exp()
    }

    pub fn q_values(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.policy.forward_row(observation)
    }

    /// TD targets `R + γ·max_a' Q(S', a'; θ⁻)`; no gradient flows through θ⁻.
    pub fn targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        if self.cfg.gamma == 0.0 {
            return Ok(batch.iter().map(|t| t.reward).collect());
        }
        let next = rows(batch.iter().map(|t| t.next_state.as_slice()), self.policy.input_dim())?;
        let q_next = self.target.forward(&next)?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let best = q_next.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                t.reward + self.cfg.gamma * best
            })
            .collect())
    }

    /// One gradient step on the Huber TD loss followed by the soft target
    /// update. Returns the loss before the step.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        let n_actions = self.policy.output_dim();
        if let Some(t) = batch.iter().find(|t| t.action >= n_actions) {
            return Err(Error::ActionOutOfRange {
                action: t.action,
                n_actions,
            });
        }
        let targets = self.targets(batch)?;
        let states = rows(batch.iter().map(|t| t.state.as_slice()), self.policy.input_dim())?;
        let q = self.policy.forward_train(&states)?;
        let chosen: Vec<f64> = batch.iter().enumerate().map(|(i, t)| q[(i, t.action)]).collect();
        let (loss, dloss) = huber_loss(&chosen, &targets, self.cfg.huber_delta)?;
        let mut loss_grad = DMatrix::zeros(batch.len(), n_actions);
        for (i, t) in batch.iter().enumerate() {
            loss_grad[(i, t.action)] = dloss[i];
        }
        let mut grads = self.policy.backward(&loss_grad)?;
        clip_gradients(&mut grads, self.cfg.grad_clip);
        optimizer_step(&mut self.policy, &grads, &mut self.optimizer)?;
        soft_update(&mut self.target, &self.policy, self.cfg.tau)?;
        self.updates += 1;
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> DqnCheckpoint {
        DqnCheckpoint {
            config: self.cfg.clone(),
            policy: self.policy.to_checkpoint(),
            target: self.target.to_checkpoint(),
            optimizer: self.optimizer.snapshot(),
            replay: self.replay.clone(),
            steps: self.steps,
            updates: self.updates,
        }
    }

    pub fn from_checkpoint(ck: &DqnCheckpoint) -> Result<Self> {
        ck.config.validate()?;
        let policy = Mlp::from_checkpoint(&ck.policy)?;
        let target = Mlp::from_checkpoint(&ck.target)?;
        if !policy.same_architecture(&target) {
            return Err(Error::ArchitectureMismatch("dqn policy and target differ".into()));
        }
        Ok(Self {
            optimizer: OptimizerState::from_snapshot(&ck.optimizer, policy.params())?,
            cfg: ck.config.clone(),
            policy,
            target,
            replay: ck.replay.clone(),
            steps: ck.steps,
            updates: ck.updates,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

impl Agent for DqnAgent {
    fn n_actions(&self) -> usize {
        self.policy.output_dim()
    }

    fn select(&mut self, observation: &[f64], rng: &mut dyn RngCore) -> Result<usize> {
        let eps = self.epsilon_at(self.steps);
        self.steps += 1;
        let explore = rng.random::<f64>() < eps;
        let random_action = rng.random_range(0..self.n_actions());
        if explore {
            Ok(random_action)
        } else {
            Ok(argmax(&self.q_values(observation)?))
        }
    }

    fn observe(&mut self, transition: Transition, rng: &mut dyn RngCore) -> Result<()> {
        self.replay.push(transition);
        if self.replay.len() >= self.cfg.learning_starts.max(self.cfg.batch_size) {
            let batch: Vec<Transition> = self.replay.sample(self.cfg.batch_size, rng)?.into_iter().cloned().collect();
            let refs: Vec<&Transition> = batch.iter().collect();
            self.update(&refs)?;
        }
        Ok(())
    }
}

/// Everything needed to resume training bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqnCheckpoint {
    pub config: DqnConfig,
    pub policy: MlpCheckpoint,
    pub target: MlpCheckpoint,
    pub optimizer: OptimizerSnapshot,
    pub replay: ReplayBuffer,
    pub steps: u64,
    pub updates: u64,
}

pub(crate) fn rows<'a>(items: impl Iterator<Item = &'a [f64]>, width: usize) -> Result<DMatrix<f64>> {
    let items: Vec<&[f64]> = items.collect();
    if let Some(bad) = items.iter().find(|r| r.len() != width) {
        return Err(Error::shape(format!("observation of length {width}"), format!("{}", bad.len())));
    }
    Ok(DMatrix::from_fn(items.len(), width, |i, j| items[i][j]))
}
