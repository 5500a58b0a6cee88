//! Proximal policy optimization over a categorical policy, with generalized
//! advantage estimation and a separate value network.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::dqn::rows;
use super::replay::Transition;
use super::{softmax, Agent};
use crate::error::{Error, Result};
use crate::neural::{optimizer_step, Activation, Mlp, MlpCheckpoint, OptimizerKind, OptimizerSnapshot, OptimizerState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    /// Optimisation epochs `K` per collected batch.
    pub epochs: usize,
    /// Transitions collected between updates (`N_batch`).
    pub batch_size: usize,
    pub minibatch_size: usize,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            activation: Activation::Tanh,
            optimizer: OptimizerKind::Adam,
            learning_rate: 3e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            batch_size: 64,
            minibatch_size: 16,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("ppo: {msg}")));
        if self.actor_hidden.iter().chain(&self.critic_hidden).any(|&h| h == 0) {
            return bad("hidden layer sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.minibatch_size == 0 {
            return bad("batch sizes must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// `Â_t = δ_t + γλ·Â_{t+1}` with `δ_t = R_t + γ·V(s_{t+1}) − V(s_t)`;
/// `values` carries the bootstrap value as its last entry.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::shape(format!("{} values", rewards.len() + 1), format!("{}", values.len())));
    }
    let mut adv = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    Ok(adv)
}

/// Negated mean clipped surrogate and its gradient with respect to each new
/// log-probability. Saturated samples on the non-improving side contribute
/// exactly zero gradient.
pub fn ppo_objective(old_logprobs: &[f64], new_logprobs: &[f64], advantages: &[f64], clip_eps: f64) -> Result<(f64, Vec<f64>)> {
    let n = old_logprobs.len();
    if new_logprobs.len() != n || advantages.len() != n {
        return Err(Error::shape(
            format!("{n} log-probabilities and advantages"),
            format!("{} / {}", new_logprobs.len(), advantages.len()),
        ));
    }
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n);
    for ((old, new), a) in old_logprobs.iter().zip(new_logprobs).zip(advantages) {
        let r = (new - old).exp();
        let (term, dterm) = if *a > 0.0 {
            if r < 1.0 + clip_eps {
                (r * a, r * a)
            } else {
                ((1.0 + clip_eps) * a, 0.0)
            }
        } else if *a < 0.0 {
            if r > 1.0 - clip_eps {
                (r * a, r * a)
            } else {
                ((1.0 - clip_eps) * a, 0.0)
            }
        } else {
            (0.0, 0.0)
        };
        total += term;
        grad.push(-dterm / n as f64);
    }
    Ok((-total / n as f64, grad))
}

/// One collected step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoStep {
    pub state: Vec<f64>,
    pub action: usize,
    pub logprob: f64,
    pub reward: f64,
    pub value: f64,
    pub next_state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PpoStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
}

#[derive(Clone, Debug)]
pub struct PpoAgent {
    pub cfg: PpoConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    pub buffer: Vec<PpoStep>,
    pub updates: u64,
}

impl PpoAgent {
    pub fn new(obs_dim: usize, n_actions: usize, cfg: PpoConfig, rng: &mut dyn RngCore) -> Result<Self> {
        cfg.validate()?;
        if obs_dim == 0 {
            return Err(Error::Config("ppo needs a non-empty observation (window ≥ 1)".into()));
        }
        if n_actions == 0 {
            return Err(Error::Config("ppo needs at least one action".into()));
        }
        let sizes = |hidden: &[usize], out: usize| {
            let mut s = vec![obs_dim];
            s.extend(hidden);
            s.push(out);
            s
        };
        let actor = Mlp::new(&sizes(&cfg.actor_hidden, n_actions), cfg.activation, rng)?;
        let critic = Mlp::new(&sizes(&cfg.critic_hidden, 1), cfg.activation, rng)?;
        Ok(Self {
            actor_opt: OptimizerState::new(cfg.optimizer, cfg.learning_rate),
            critic_opt: OptimizerState::new(cfg.optimizer, cfg.learning_rate),
            cfg,
            actor,
            critic,
            buffer: Vec::new(),
            updates: 0,
        })
    }

    pub fn action_probs(&self, observation: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.actor.forward_row(observation)?))
    }

    pub fn value(&self, observation: &[f64]) -> Result<f64> {
        Ok(self.critic.forward_row(observation)?[0])
    }

    /// One critic step on mean squared error; returns the loss before it.
    pub fn fit_critic(&mut self, states: &DMatrix<f64>, returns: &[f64]) -> Result<f64> {
        let v = self.critic.forward_train(states)?;
        let n = returns.len() as f64;
        let mut grad = DMatrix::zeros(returns.len(), 1);
        let mut loss = 0.0;
        for (i, r) in returns.iter().enumerate() {
            let e = v[(i, 0)] - r;
            loss += e * e / n;
            grad[(i, 0)] = 2.0 * e / n;
        }
        let g = self.critic.backward(&grad)?;
        optimizer_step(&mut self.critic, &g, &mut self.critic_opt)?;
        Ok(loss)
    }

    /// One actor step on the clipped surrogate for a minibatch.
    fn fit_actor(&mut self, states: &DMatrix<f64>, actions: &[usize], old_logprobs: &[f64], advantages: &[f64]) -> Result<f64> {
        let logits = self.actor.forward_train(states)?;
        let mut probs = Vec::with_capacity(actions.len());
        let mut new_logprobs = Vec::with_capacity(actions.len());
        for (i, &a) in actions.iter().enumerate() {
            let p = softmax(&logits.row(i).iter().copied().collect::<Vec<_>>());
            new_logprobs.push(p[a].ln());
            probs.push(p);
        }
        let (loss, dlogp) = ppo_objective(old_logprobs, &new_logprobs, advantages, self.cfg.clip_eps)?;
        // ∂ log p_a / ∂ logit_j = 1{j = a} − p_j.
        let mut grad = DMatrix::zeros(actions.len(), logits.ncols());
        for (i, &a) in actions.iter().enumerate() {
            for j in 0..logits.ncols() {
                let indicator = if j == a { 1.0 } else { 0.0 };
                grad[(i, j)] = dlogp[i] * (indicator - probs[i][j]);
            }
        }
        let g = self.actor.backward(&grad)?;
        optimizer_step(&mut self.actor, &g, &mut self.actor_opt)?;
        Ok(loss)
    }

    /// `K` epochs of shuffled minibatch updates on a collected batch whose
    /// `values` include the bootstrap value of the final next-state.
    pub fn update_on(&mut self, steps: &[PpoStep], bootstrap: f64, rng: &mut dyn RngCore) -> Result<PpoStats> {
        if steps.is_empty() || self.cfg.epochs == 0 {
            return Ok(PpoStats::default());
        }
        if let Some(s) = steps.iter().find(|s| s.action >= self.actor.output_dim()) {
            return Err(Error::ActionOutOfRange {
                action: s.action,
                n_actions: self.actor.output_dim(),
            });
        }
        let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
        let mut values: Vec<f64> = steps.iter().map(|s| s.value).collect();
        values.push(bootstrap);
        let adv_raw = gae(&rewards, &values, self.cfg.gamma, self.cfg.gae_lambda)?;
        let returns: Vec<f64> = adv_raw.iter().zip(&values).map(|(a, v)| a + v).collect();
        let advantages = if self.cfg.normalize_advantages && adv_raw.len() > 1 {
            let n = adv_raw.len() as f64;
            let mean = adv_raw.iter().sum::<f64>() / n;
            let sd = (adv_raw.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
            adv_raw.iter().map(|a| (a - mean) / (sd + 1e-8)).collect()
        } else {
            adv_raw
        };

        let width = self.actor.input_dim();
        let mut stats = PpoStats::default();
        let mut count = 0.0;
        for _ in 0..self.cfg.epochs {
            let order = rand::seq::index::sample(rng, steps.len(), steps.len()).into_vec();
            for chunk in order.chunks(self.cfg.minibatch_size) {
                let states = rows(chunk.iter().map(|&i| steps[i].state.as_slice()), width)?;
                let actions: Vec<usize> = chunk.iter().map(|&i| steps[i].action).collect();
                let old: Vec<f64> = chunk.iter().map(|&i| steps[i].logprob).collect();
                let adv: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
                let ret: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
                stats.actor_loss += self.fit_actor(&states, &actions, &old, &adv)?;
                stats.critic_loss += self.fit_critic(&states, &ret)?;
                count += 1.0;
            }
        }
        stats.actor_loss /= count;
        stats.critic_loss /= count;
        self.updates += 1;
        Ok(stats)
    }

    pub fn to_checkpoint(&self) -> PpoCheckpoint {
        PpoCheckpoint {
            config: self.cfg.clone(),
            actor: self.actor.to_checkpoint(),
            critic: self.critic.to_checkpoint(),
            actor_opt: self.actor_opt.snapshot(),
            critic_opt: self.critic_opt.snapshot(),
            buffer: self.buffer.clone(),
            updates: self.updates,
        }
    }

    pub fn from_checkpoint(ck: &PpoCheckpoint) -> Result<Self> {
        ck.config.validate()?;
        let actor = Mlp::from_checkpoint(&ck.actor)?;
        let critic = Mlp::from_checkpoint(&ck.critic)?;
        if actor.input_dim() != critic.input_dim() || critic.output_dim() != 1 {
            return Err(Error::ArchitectureMismatch("ppo actor/critic shapes disagree".into()));
        }
        Ok(Self {
            actor_opt: OptimizerState::from_snapshot(&ck.actor_opt, actor.params())?,
            critic_opt: OptimizerState::from_snapshot(&ck.critic_opt, critic.params())?,
            cfg: ck.config.clone(),
            actor,
            critic,
            buffer: ck.buffer.clone(),
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

impl Agent for PpoAgent {
    fn n_actions(&self) -> usize {
        self.actor.output_dim()
    }

    fn select(&mut self, observation: &[f64], rng: &mut dyn RngCore) -> Result<usize> {
        let probs = self.action_probs(observation)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(a);
            }
        }
        Ok(probs.len() - 1)
    }

    fn observe(&mut self, transition: Transition, rng: &mut dyn RngCore) -> Result<()> {
        let probs = self.action_probs(&transition.state)?;
        let step = PpoStep {
            logprob: probs
                .get(transition.action)
                .ok_or(Error::ActionOutOfRange {
                    action: transition.action,
                    n_actions: probs.len(),
                })?
                .ln(),
            value: self.value(&transition.state)?,
            state: transition.state,
            action: transition.action,
            reward: transition.reward,
            next_state: transition.next_state,
        };
        self.buffer.push(step);
        if self.buffer.len() >= self.cfg.batch_size {
            let steps = std::mem::take(&mut self.buffer);
            let bootstrap = self.value(&steps.last().unwrap().next_state)?;
            self.update_on(&steps, bootstrap, rng)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoCheckpoint {
    pub config: PpoConfig,
    pub actor: MlpCheckpoint,
    pub critic: MlpCheckpoint,
    pub actor_opt: OptimizerSnapshot,
    pub critic_opt: OptimizerSnapshot,
    pub buffer: Vec<PpoStep>,
    pub updates: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct_gae(r: &[f64], v: &[f64], g: f64, l: f64) -> Vec<f64> {
        (0..r.len())
            .map(|t| {
                (t..r.len())
                    .map(|k| (g * l).powi((k - t) as i32) * (r[k] + g * v[k + 1] - v[k]))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn gae_single_step_and_lambda_zero() {
        let a = gae(&[2.0], &[0.5, 1.5], 0.9, 0.95).unwrap();
        assert_abs_diff_eq!(a[0], 2.0 + 0.9 * 1.5 - 0.5, epsilon = 1e-15);
        let r = [1.0, -1.0, 0.5];
        let v = [0.2, 0.4, -0.3, 0.1];
        let a = gae(&r, &v, 0.99, 0.0).unwrap();
        for t in 0..3 {
            assert_abs_diff_eq!(a[t], r[t] + 0.99 * v[t + 1] - v[t], epsilon = 1e-15);
        }
    }

    #[test]
    fn gae_matches_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let r: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = gae(&r, &v, 0.99, 0.95).unwrap();
        for (x, y) in a.iter().zip(direct_gae(&r, &v, 0.99, 0.95)) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn objective_cases() {
        let (loss, _) = ppo_objective(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 3.0], 0.2).unwrap();
        assert_abs_diff_eq!(loss, -2.0, epsilon = 1e-15);

        let r_hi = (1.4f64).ln();
        let (loss, g) = ppo_objective(&[0.0], &[r_hi], &[2.0], 0.2).unwrap();
        assert_abs_diff_eq!(loss, -1.2 * 2.0, epsilon = 1e-12);
        assert_eq!(g[0], 0.0);

        let r_lo = (0.6f64).ln();
        let (loss, g) = ppo_objective(&[0.0], &[r_lo], &[-2.0], 0.2).unwrap();
        assert_abs_diff_eq!(loss, 0.8 * 2.0, epsilon = 1e-12);
        assert_eq!(g[0], 0.0);
    }

    fn steps(n: usize, reward: f64) -> Vec<PpoStep> {
        (0..n)
            .map(|i| PpoStep {
                state: vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()],
                action: i % 3,
                logprob: (1.0f64 / 3.0).ln(),
                reward,
                value: 0.0,
                next_state: vec![0.0, 0.0],
            })
            .collect()
    }

    #[test]
    fn zero_epochs_or_zero_advantage_keep_actor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = PpoAgent::new(
            2,
            3,
            PpoConfig {
                epochs: 0,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        let (actor, critic) = (a.actor.clone(), a.critic.clone());
        a.update_on(&steps(8, 1.0), 0.0, &mut rng).unwrap();
        assert_eq!(a.actor, actor);
        assert_eq!(a.critic, critic);

        // With γ = 0 and V ≡ R every advantage is zero.
        let mut a = PpoAgent::new(
            2,
            3,
            PpoConfig {
                gamma: 0.0,
                ..Default::default()
            },
            &mut rng,
        )
        .unwrap();
        let actor = a.actor.clone();
        let mut s = steps(8, 0.5);
        s.iter_mut().for_each(|st| st.value = 0.5);
        a.update_on(&s, 0.5, &mut rng).unwrap();
        assert_eq!(a.actor.params(), actor.params());
    }

    #[test]
    fn critic_regresses_to_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut a = PpoAgent::new(2, 3, PpoConfig::default(), &mut rng).unwrap();
        let s = steps(32, 0.0);
        let states = rows(s.iter().map(|st| st.state.as_slice()), 2).unwrap();
        let returns = vec![0.7; 32];
        let mut loss = f64::INFINITY;
        for _ in 0..200 {
            loss = a.fit_critic(&states, &returns).unwrap();
        }
        assert!(loss < 1e-3, "loss {loss}");
    }

    #[test]
    fn probabilities_are_categorical() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = PpoAgent::new(2, 5, PpoConfig::default(), &mut rng).unwrap();
        let p = a.action_probs(&[0.3, -0.9]).unwrap();
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }
}
