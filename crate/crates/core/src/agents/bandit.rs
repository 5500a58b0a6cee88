//! ε-greedy multi-armed bandit with sample-average value estimates.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditAgent {
    pub q: Vec<f64>,
    pub n: Vec<u64>,
    pub epsilon: f64,
    pub q_init: f64,
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
struct Row {
    action: usize,
    q: f64,
    n: u64,
}

impl BanditAgent {
    pub fn new(n_actions: usize, epsilon: f64, q_init: f64) -> Result<Self> {
        if n_actions == 0 {
            return Err(Error::Config("bandit needs at least one action".into()));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        Ok(Self {
            q: vec![q_init; n_actions],
            n: vec![0; n_actions],
            epsilon,
            q_init,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.q.len()
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        // Both draws are always taken so the stream position does not depend
        // on the branch.
        let explore = rng.random::<f64>() < self.epsilon;
        let random_action = rng.random_range(0..self.n_actions());
        if explore {
            random_action
        } else {
            argmax(&self.q)
        }
    }

    /// `N(a) += 1; Q(a) += (R − Q(a)) / N(a)`.
    pub fn update(&mut self, action: usize, reward: f64) -> Result<()> {
        if action >= self.n_actions() {
            return Err(Error::ActionOutOfRange {
                action,
                n_actions: self.n_actions(),
            });
        }
        if !reward.is_finite() {
            return Err(Error::NonFiniteUpdate(format!("bandit reward {reward}")));
        }
        self.n[action] += 1;
        self.q[action] += (reward - self.q[action]) / self.n[action] as f64;
        Ok(())
    }

    /// CSV with columns `action,q,n`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (action, (q, n)) in self.q.iter().zip(&self.n).enumerate() {
            w.serialize(Row { action, q: *q, n: *n })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path, epsilon: f64, q_init: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut rows: Vec<Row> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        rows.sort_by_key(|row| row.action);
        if rows.iter().enumerate().any(|(i, row)| row.action != i) {
            return Err(Error::Config(format!("{}: actions must be 0..n without gaps", path.display())));
        }
        let mut agent = BanditAgent::new(rows.len(), epsilon, q_init)?;
        for row in rows {
            agent.q[row.action] = row.q;
            agent.n[row.action] = row.n;
        }
        Ok(agent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_choice() {
        let mut a = BanditAgent::new(3, 0.0, 0.0).unwrap();
        a.q = vec![0.0, 5.0, 1.0];
        assert_eq!(a.select(&mut ChaCha8Rng::seed_from_u64(0)), 1);
        a.q = vec![2.0, 2.0, 1.0];
        assert_eq!(a.select(&mut ChaCha8Rng::seed_from_u64(0)), 0);
    }

    #[test]
    fn running_mean() {
        let mut a = BanditAgent::new(2, 0.1, 0.0).unwrap();
        a.update(0, 2.0).unwrap();
        assert_eq!((a.q[0], a.n[0]), (2.0, 1));
        let mut b = BanditAgent::new(1, 0.1, 0.0).unwrap();
        b.update(0, 1.0).unwrap();
        b.update(0, 3.0).unwrap();
        assert_abs_diff_eq!(b.q[0], 2.0);
        assert!(a.update(2, 1.0).is_err());
    }

    #[test]
    fn uniform_exploration() {
        let a = BanditAgent::new(4, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            counts[a.select(&mut rng)] += 1;
        }
        let p = 0.25;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut a = BanditAgent::new(3, 0.35, 0.0).unwrap();
        a.update(1, 0.7).unwrap();
        a.update(2, -1.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bandit.csv");
        a.save_csv(&path).unwrap();
        assert_eq!(BanditAgent::load_csv(&path, 0.35, 0.0).unwrap(), a);
    }
}
