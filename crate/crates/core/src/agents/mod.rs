//! Sampling agents that choose grid cells for the environment.
//!
//! Agents never own a random generator. The caller derives one per step
//! (`Stream::Agent` for selection, `Stream::Replay` for learning), so a run
//! is a pure function of its seed and can be resumed from a checkpoint.

pub mod bandit;
pub mod dqn;
pub mod ppo;
pub mod replay;

use rand::RngCore;

pub use bandit::BanditAgent;
pub use dqn::{DqnAgent, DqnConfig};
pub use ppo::{PpoAgent, PpoConfig};
pub use replay::{ReplayBuffer, Transition};

use crate::error::Result;

pub trait Agent {
    fn n_actions(&self) -> usize;

    fn select(&mut self, observation: &[f64], rng: &mut dyn RngCore) -> Result<usize>;

    /// Feed back one transition; learning agents may update here.
    fn observe(&mut self, transition: Transition, rng: &mut dyn RngCore) -> Result<()>;
}

impl Agent for BanditAgent {
    fn n_actions(&self) -> usize {
        BanditAgent::n_actions(self)
    }

    fn select(&mut self, _observation: &[f64], rng: &mut dyn RngCore) -> Result<usize> {
        Ok(BanditAgent::select(self, rng))
    }

    fn observe(&mut self, transition: Transition, _rng: &mut dyn RngCore) -> Result<()> {
        self.update(transition.action, transition.reward)
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
