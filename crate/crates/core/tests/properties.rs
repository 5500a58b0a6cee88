//! Property tests for the invariants of each module.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rsdmd::agents::bandit::argmax;
use rsdmd::agents::ppo::{gae, ppo_objective};
use rsdmd::agents::{BanditAgent, PpoAgent, PpoConfig, ReplayBuffer, Transition};
use rsdmd::dictionary::Dictionary;
use rsdmd::env::{compute_reward, kde_density, ActionGrid, RewardConfig, StateWindow};
use rsdmd::neural::{huber_loss, soft_update, Activation, Mlp};
use rsdmd::sdmd::{build_gram, estimate_koopman, spectral_consistency};
use rsdmd::sde::{builtin_system, euler_maruyama_step, simulate_trajectory, Domain};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn matrix(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| data[(i * cols + j) % data.len()])
}

fn transition(i: usize) -> Transition {
    Transition {
        state: vec![i as f64],
        action: i % 3,
        reward: i as f64,
        next_state: vec![i as f64 + 1.0],
    }
}

proptest! {
    #![proptest_config(config())]

    // ------------------------------------------------------------ agents

    #[test]
    fn bandit_q_is_the_arm_mean(pulls in prop::collection::vec((0usize..4, -100.0f64..100.0), 1..200), q_init in -5.0f64..5.0) {
        let mut agent = BanditAgent::new(4, 0.2, q_init).unwrap();
        let mut seen: Vec<Vec<f64>> = vec![Vec::new(); 4];
        for (a, r) in &pulls {
            agent.update(*a, *r).unwrap();
            seen[*a].push(*r);
        }
        for a in 0..4 {
            if seen[a].is_empty() {
                prop_assert_eq!(agent.q[a], q_init);
            } else {
                let mean = seen[a].iter().sum::<f64>() / seen[a].len() as f64;
                prop_assert!((agent.q[a] - mean).abs() <= 1e-12 * (1.0 + mean.abs()), "{} vs {}", agent.q[a], mean);
            }
            prop_assert_eq!(agent.n[a], seen[a].len() as u64);
        }
    }

    #[test]
    fn greedy_choice_ignores_a_common_shift(q in prop::collection::vec(-10.0f64..10.0, 1..12), shift in -50.0f64..50.0) {
        // Shifting is exact only when it does not reorder by rounding; use a
        // shift representable alongside every entry.
        let shift = shift.round();
        let q: Vec<f64> = q.iter().map(|v| (v * 8.0).round() / 8.0).collect();
        let shifted: Vec<f64> = q.iter().map(|v| v + shift).collect();
        prop_assert_eq!(argmax(&q), argmax(&shifted));
    }

    #[test]
    fn gae_recursion_equals_direct_sum(
        rewards in prop::collection::vec(-1.0f64..1.0, 1..=50),
        seed in any::<u64>(),
        gamma in 0.0f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..=rewards.len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let adv = gae(&rewards, &values, gamma, lambda).unwrap();
        for t in 0..rewards.len() {
            let direct: f64 = (t..rewards.len())
                .map(|l| (gamma * lambda).powi((l - t) as i32) * (rewards[l] + gamma * values[l + 1] - values[l]))
                .sum();
            prop_assert!((adv[t] - direct).abs() < 1e-12, "t={} {} vs {}", t, adv[t], direct);
        }
    }

    #[test]
    fn saturated_samples_have_zero_gradient(
        samples in prop::collection::vec((-3.0f64..0.0, -1.0f64..1.0, -2.0f64..2.0), 1..40),
        clip in 0.05f64..0.5,
    ) {
        let old: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let new: Vec<f64> = samples.iter().map(|s| s.0 + s.1).collect();
        let adv: Vec<f64> = samples.iter().map(|s| s.2).collect();
        let (_, grad) = ppo_objective(&old, &new, &adv, clip).unwrap();
        for i in 0..samples.len() {
            let r = (new[i] - old[i]).exp();
            let saturated = (adv[i] > 0.0 && r >= 1.0 + clip) || (adv[i] < 0.0 && r <= 1.0 - clip);
            if saturated || adv[i] == 0.0 {
                prop_assert_eq!(grad[i], 0.0);
            } else {
                prop_assert!(grad[i] != 0.0);
            }
        }
    }

    #[test]
    fn ppo_probabilities_are_categorical(seed in any::<u64>(), obs in prop::collection::vec(-50.0f64..50.0, 4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agent = PpoAgent::new(4, 5, PpoConfig::default(), &mut rng).unwrap();
        let p = agent.action_probs(&obs).unwrap();
        prop_assert_eq!(p.len(), 5);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn replay_keeps_the_newest(capacity in 1usize..20, pushes in 0usize..60) {
        let mut buf = ReplayBuffer::new(capacity).unwrap();
        let mut model = VecDeque::new();
        for i in 0..pushes {
            buf.push(transition(i));
            model.push_back(i as f64);
            if model.len() > capacity {
                model.pop_front();
            }
            prop_assert!(buf.len() <= capacity);
        }
        let kept: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        prop_assert_eq!(kept, model.into_iter().collect::<Vec<_>>());
    }

    // ------------------------------------------------------------ neural

    #[test]
    fn huber_is_continuous_and_c1_at_delta(delta in 0.1f64..5.0) {
        let h = 1e-9 * delta;
        let (below, g_below) = huber_loss(&[delta - h], &[0.0], delta).unwrap();
        let (above, g_above) = huber_loss(&[delta + h], &[0.0], delta).unwrap();
        // The slope at δ is δ, so the step across is 2hδ up to rounding.
        prop_assert!((above - below).abs() <= 2.0 * h * delta * (1.0 + 1e-6) + 1e-14 * delta * delta);
        prop_assert!((g_above[0] - g_below[0]).abs() < 1e-8);
    }

    #[test]
    fn soft_update_contracts_geometrically(seed in any::<u64>(), tau in 0.01f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = Mlp::new(&[2, 4, 3], Activation::Relu, &mut rng).unwrap();
        let mut tgt = Mlp::new(&[2, 4, 3], Activation::Relu, &mut rng).unwrap();
        let dist = |a: &Mlp| -> f64 {
            a.params().to_flat().iter().zip(src.params().to_flat()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        for _ in 0..5 {
            let before = dist(&tgt);
            soft_update(&mut tgt, &src, tau).unwrap();
            prop_assert!((dist(&tgt) - (1.0 - tau) * before).abs() <= 1e-12 * (1.0 + before));
        }
    }

    #[test]
    fn forward_shape_matches_last_layer(batch in 1usize..10, hidden in 1usize..8, out in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&[3, hidden, out], Activation::Tanh, &mut rng).unwrap();
        let y = net.forward(&DMatrix::from_element(batch, 3, 0.3)).unwrap();
        prop_assert_eq!(y.shape(), (batch, out));
    }

    // ------------------------------------------------------------ dictionary

    #[test]
    fn constant_feature_and_generator_formula(
        coords in prop::collection::vec(-2.0f64..2.0, 2..40),
        kind in 0usize..3,
        system in prop::sample::select(vec!["double_well", "duffing", "fhn"]),
    ) {
        let m = coords.len() / 2;
        let points = matrix(m, 2, &coords);
        let domain = Domain::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let dict = match kind {
            0 => Dictionary::rbf_grid(&domain, 3, None).unwrap(),
            1 => Dictionary::monomial(2, 3).unwrap(),
            _ => Dictionary::hermite(2, 3).unwrap(),
        };
        let system = builtin_system(system, &BTreeMap::new()).unwrap();
        let psi = dict.evaluate(&points).unwrap();
        let gen = dict.generator_apply(&system, &points).unwrap();
        for r in 0..m {
            prop_assert_eq!(psi[(r, 0)], 1.0);
            prop_assert_eq!(gen[(r, 0)], 0.0);
            // Aψ = b·∇ψ + ½ tr(σσᵀ ∇²ψ) from the dictionary's own jet.
            let x: Vec<f64> = points.row(r).iter().copied().collect();
            let jet = dict.jet(&x).unwrap();
            let b = system.drift(&x);
            let a = system.diffusion_tensor(&x);
            for j in 0..dict.size() {
                let mut v = 0.0;
                for p in 0..2 {
                    v += b[p] * jet.grad[(j, p)];
                    for q in 0..2 {
                        v += 0.5 * a[(p, q)] * jet.hess[(j, p * 2 + q)];
                    }
                }
                prop_assert!((gen[(r, j)] - v).abs() <= 1e-12 * (1.0 + v.abs()), "ψ_{}: {} vs {}", j, gen[(r, j)], v);
            }
        }
    }

    // ------------------------------------------------------------ sdmd

    #[test]
    fn estimate_invariants(seed in any::<u64>(), m in 30usize..80, dt in 0.001f64..0.1) {
        let system = builtin_system("double_well", &BTreeMap::new()).unwrap();
        let dict = Dictionary::monomial(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = [rand::Rng::random_range(&mut rng, -1.5..1.5), rand::Rng::random_range(&mut rng, -1.5..1.5)];
        let data = simulate_trajectory(&system, &x0, m, dt, seed).unwrap();
        let psi_x = dict.evaluate(&data.x).unwrap();
        let psi_y = dict.evaluate(&data.y).unwrap();
        let gen = dict.generator_apply(&system, &data.x).unwrap();
        let (g, h) = build_gram(&psi_x, &gen).unwrap();
        prop_assert!((&g - g.transpose()).amax() < 1e-12);

        let ridge = 1e-6;
        let Ok(est) = estimate_koopman(&g, &h, dt, ridge) else { return Ok(()) };
        // K̂ reproducible from the stored pieces.
        let mut reg = g.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += est.regularization;
        }
        let k = DMatrix::identity(g.nrows(), g.nrows()) + reg.lu().solve(&h).unwrap() * dt;
        prop_assert!((&k - &est.k).amax() < 1e-6 * (1.0 + k.amax()));
        // Sorted moduli, exp(dt·λ) = μ, small eigen-residuals.
        for w in est.mu.windows(2) {
            prop_assert!(w[0].norm() >= w[1].norm() - 1e-15);
        }
        for (mu, lam) in est.mu.iter().zip(&est.lambda) {
            if let Some(l) = lam {
                prop_assert!(((l * dt).exp() - mu).norm() < 1e-12 * (1.0 + mu.norm()));
            }
        }
        prop_assert!(est.max_residual() < 1e-8 * est.k.norm());
        // The constant observable is an exact fixed point, though not always
        // the largest mode for a polynomial basis.
        prop_assert!(est.mu.iter().any(|m| (m - rsdmd::linalg::C64::new(1.0, 0.0)).norm() < 1e-8));

        let report = spectral_consistency(&est, &psi_x, &psi_y, None, 4).unwrap();
        prop_assert!((report.total - report.per_mode.iter().sum::<f64>()).abs() <= 1e-15 * (1.0 + report.total));
        prop_assert!(report.per_mode.iter().all(|v| *v >= 0.0));
    }

    // ------------------------------------------------------------ sde

    #[test]
    fn trajectories_are_deterministic(seed in any::<u64>(), n in 1usize..200) {
        let system = builtin_system("fhn", &BTreeMap::new()).unwrap();
        let a = simulate_trajectory(&system, &[0.1, 0.05], n, 0.01, seed).unwrap();
        let b = simulate_trajectory(&system, &[0.1, 0.05], n, 0.01, seed).unwrap();
        prop_assert_eq!(a.x.shape(), (n, 2));
        prop_assert_eq!(a.y.shape(), (n, 2));
        prop_assert!(a.x.iter().zip(b.x.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
        prop_assert!(a.y.iter().zip(b.y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn equilibria_are_fixed_without_noise(name in prop::sample::select(vec!["double_well", "duffing", "ou"]), dt in 1e-4f64..0.1) {
        let system = builtin_system(name, &BTreeMap::new()).unwrap();
        let zero = vec![0.0; system.noise_dim()];
        for eq in system.equilibria() {
            let next = euler_maruyama_step(&system, &eq, dt, &zero).unwrap();
            for (a, b) in next.iter().zip(&eq) {
                prop_assert!((a - b).abs() < 1e-14, "{name}: {eq:?} -> {next:?}");
            }
        }
    }

    // ------------------------------------------------------------ env

    #[test]
    fn grid_cells_are_a_bijection(k in 1usize..12, x in -3.0f64..3.0, y in -4.0f64..4.0) {
        let grid = ActionGrid::new(k, Domain::new(vec![-3.0, -4.0], vec![3.0, 4.0]).unwrap()).unwrap();
        let a = grid.cell_of(&[x, y]).unwrap();
        prop_assert_eq!(grid.action_of(&grid.cell_indices(a).unwrap()).unwrap(), a);
        let (lo, hi) = grid.cell_bounds(a).unwrap();
        prop_assert!(lo[0] <= x && x <= hi[0] && lo[1] <= y && y <= hi[1]);
    }

    #[test]
    fn reward_decomposes(consistency in 0.0f64..100.0, density in 0.0f64..10.0, alpha in 0.0f64..1.0, eps in 1e-4f64..1.0) {
        let cfg = RewardConfig { alpha_exp: alpha, eps_kde: eps, ..RewardConfig::default() };
        let r = compute_reward(consistency, density, &cfg);
        prop_assert_eq!(r.bonus, alpha / (density + eps));
        prop_assert!((r.total - (r.r0 - r.consistency + r.bonus)).abs() <= 1e-12 * (1.0 + r.total.abs()));
    }

    #[test]
    fn window_holds_the_last_points(capacity in 1usize..6, n in 0usize..20) {
        let domain = Domain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let mut w = StateWindow::new(capacity);
        for i in 0..n {
            w.push(vec![i as f64 / 20.0, 0.5]);
        }
        prop_assert_eq!(w.len(), n.min(capacity));
        let expected: Vec<f64> = (n.saturating_sub(capacity)..n).map(|i| i as f64 / 20.0).collect();
        let got: Vec<f64> = w.points.iter().map(|p| p[0]).collect();
        prop_assert_eq!(got, expected);
        prop_assert_eq!(w.flatten(&domain).len(), 2 * capacity);
    }

    #[test]
    fn far_cells_earn_a_larger_bonus(seed in any::<u64>(), n in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let history: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rand::Rng::random_range(&mut rng, -0.2..0.2), rand::Rng::random_range(&mut rng, -0.2..0.2)])
            .collect();
        let cfg = RewardConfig::default();
        let near = compute_reward(0.0, kde_density(&history, &[0.0, 0.0], 0.3), &cfg);
        let far = compute_reward(0.0, kde_density(&history, &[2.5, 3.5], 0.3), &cfg);
        prop_assert!(far.bonus > near.bonus);
    }
}

#[test]
fn kde_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let history: Vec<Vec<f64>> = (0..30)
        .map(|_| vec![rand::Rng::random_range(&mut rng, -1.0..1.0), rand::Rng::random_range(&mut rng, -1.0..1.0)])
        .collect();
    // Monte Carlo over a box that covers every kernel to many bandwidths.
    let (lo, hi, h) = (-4.0, 4.0, 0.4);
    let area = (hi - lo) * (hi - lo);
    let n = 200_000;
    let integral = (0..n)
        .map(|_| {
            let q = [rand::Rng::random_range(&mut rng, lo..hi), rand::Rng::random_range(&mut rng, lo..hi)];
            kde_density(&history, &q, h)
        })
        .sum::<f64>()
        * area
        / n as f64;
    assert!((integral - 1.0).abs() < 0.05, "{integral}");
}

#[test]
fn ou_stationary_moments() {
    // θ = 1, σ = √2: stationary law N(0, 1). Samples are autocorrelated, so
    // the standard error uses the effective sample size m·dt/(2τ), τ = 1/θ.
    let system = builtin_system("ou", &BTreeMap::new()).unwrap();
    let m = 200_000;
    let dt = 0.01;
    let data = simulate_trajectory(&system, &[0.0], m, dt, 3).unwrap();
    let burn = 1000;
    let xs: Vec<f64> = data.y.iter().skip(burn).copied().collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    let n_eff = xs.len() as f64 * dt / 2.0;
    // Euler–Maruyama variance is σ²/(2θ − θ²dt) rather than σ²/(2θ).
    let target = 2.0 / (2.0 - dt);
    assert!(mean.abs() < 3.0 / n_eff.sqrt(), "mean {mean}");
    assert!((var - target).abs() < 3.0 * (2.0f64 / n_eff).sqrt(), "var {var}");
}
