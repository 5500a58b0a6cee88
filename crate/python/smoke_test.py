"""Smoke test for the reinforced_sdmd extension module.

Build and install first:
    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml
"""

import json
import math
import tempfile

import reinforced_sdmd as rs


def check_ou_spectrum():
    x, y = rs.simulate("ou", [0.0], 100_000, 0.01, seed=7)
    d = rs.Dictionary.hermite(1, 2)
    est = rs.sdmd(d, x, y, 0.01, mode="analytic", system_name="ou")
    lam = [l.real for l in est.lambdas]
    assert abs(lam[0]) < 0.05, lam
    assert abs(lam[1] + 1.0) < 0.1 and abs(lam[2] + 2.0) < 0.2, lam
    print("OU generator eigenvalues:", [round(v, 4) for v in lam])


def check_eigenfunctions():
    d = rs.Dictionary.rbf_grid([-3.0, -4.0], [3.0, 4.0], 6)
    x, y = rs.simulate("double_well", [1.0, 0.0], 3000, 0.002, seed=1)
    est = rs.sdmd(d, x, y, 0.002, system_name="double_well")
    phi = est.eigenfunctions(d.evaluate([[-1.0, 0.0], [1.0, 0.0]]))
    assert len(phi) == 2 and len(phi[0]) >= 1
    assert abs(est.mu[0] - 1.0) < 1e-6, est.mu[0]
    print(est)


def check_bandit_and_reward():
    total, bonus = rs.reward(0.2, 1.0, r0=1.0, alpha_exp=0.15, eps_kde=0.01)
    assert math.isclose(bonus, 0.15 / 1.01) and math.isclose(total, 1.0 - 0.2 + bonus)
    agent = rs.BanditAgent(3, epsilon=0.1, seed=4)
    for _ in range(300):
        a = agent.select()
        agent.update(a, [0.1, 0.9, 0.4][a])
    assert agent.q.index(max(agent.q)) == 1, agent.q
    print("bandit counts:", agent.counts)


def check_regret():
    fast = rs.regret([1.0, 0.5], 0.1, horizon=20_000, seed=0)
    slow = rs.regret([1.0, 0.9], 0.2, horizon=20_000, seed=0)
    assert fast.gap_holds and not slow.gap_holds
    assert fast.final_decade_rate < 0.2 * fast.first_decade_rate
    assert slow.last_half_slope > 0 and slow.last_half_r_squared > 0.99
    print("regret:", round(fast.cumulative[-1], 2), "vs", round(slow.cumulative[-1], 2))


def check_run_and_config():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = {
            "system": {"name": "double_well", "dt": 0.002, "n_steps": 100},
            "grid": {"k": 4},
            "dictionary": {"kind": "rbf", "per_axis": 5},
            "agent": {"kind": "bandit"},
            "run": {"t_max": 20, "output_dir": tmp, "export_steps": [20], "eigenfunction_resolution": 5},
        }
        resolved = json.loads(rs.validate_config(json.dumps(cfg)))
        assert resolved["grid"]["k"] == 4
        out, steps = rs.run_experiment(json.dumps(cfg))
        assert steps == 20
        with open(f"{out}/steps.jsonl") as f:
            assert sum(1 for _ in f) == 20
    try:
        rs.validate_config('{"run": {}}')
    except ValueError as e:
        print("bad config rejected:", e)
    else:
        raise AssertionError("missing system block accepted")


def check_gradients():
    err, ok = rs.gradcheck(2)
    assert ok and err < 1e-4, err


if __name__ == "__main__":
    check_ou_spectrum()
    check_eigenfunctions()
    check_bandit_and_reward()
    check_regret()
    check_run_and_config()
    check_gradients()
    print("python smoke test passed")
