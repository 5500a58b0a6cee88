//! End-to-end checks of the `rsdmd` binary: exit codes and output files.

use std::path::Path;
use std::process::{Command, Output};

fn rsdmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsdmd"))
        .args(args)
        .env_remove("RSDMD_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, t_max: u64, out: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "system": {"name": "double_well", "dt": 0.002, "n_steps": 80},
        "grid": {"k": 4},
        "dictionary": {"kind": "rbf", "per_axis": 5},
        "agent": {"kind": "bandit"},
        "reward": {"eps_kde": 1.0},
        "run": {
            "t_max": t_max, "seed": 3, "output_dir": out,
            "checkpoint_every": 10, "export_steps": [10, 20], "eigenfunction_resolution": 5
        }
    });
    let path = dir.join(format!("cfg_{t_max}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn validate_config_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), 20, &dir.path().join("out"));
    let ok = rsdmd(&["validate-config", good.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let resolved: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(resolved["reward"]["alpha_exp"], 0.15);

    let missing = dir.path().join("missing_system.json");
    std::fs::write(&missing, r#"{"run": {"t_max": 5}}"#).unwrap();
    let bad = rsdmd(&["validate-config", missing.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error[ConfigError]"));

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"system": {"name": "double_well"}, "colour": 1}"#).unwrap();
    assert_eq!(rsdmd(&["validate-config", unknown.to_str().unwrap()]).status.code(), Some(1));

    assert_eq!(rsdmd(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(rsdmd(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // A checkpoint directory that does not exist is a runtime failure.
    let out = rsdmd(&[
        "export",
        "--checkpoint",
        dir.path().join("nowhere").to_str().unwrap(),
        "--what",
        "eigvals",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // Diverging trajectory.
    let out = rsdmd(&["simulate", "--system", "ou", "--x0", "1", "--steps", "500", "--dt", "10"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_resume_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let full_out = dir.path().join("full");
    let part_out = dir.path().join("part");
    let full = write_config(dir.path(), 20, &full_out);
    assert_eq!(rsdmd(&["run", "--config", full.to_str().unwrap()]).status.code(), Some(0));
    for f in [
        "resolved_config.json",
        "steps.jsonl",
        "eigenvalues.csv",
        "eigenfunctions_step10.csv",
        "eigenfunctions_step20.csv",
        "reward_map.csv",
        "final_estimate.json",
    ] {
        assert!(full_out.join(f).exists(), "missing {f}");
    }

    let part = write_config(dir.path(), 10, &part_out);
    assert_eq!(rsdmd(&["run", "--config", part.to_str().unwrap()]).status.code(), Some(0));
    let resume_cfg = dir.path().join("resume.json");
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&full).unwrap()).unwrap();
    v["run"]["output_dir"] = serde_json::json!(part_out);
    std::fs::write(&resume_cfg, v.to_string()).unwrap();
    let ck = part_out.join("checkpoints/step_10");
    let res = rsdmd(&["run", "--config", resume_cfg.to_str().unwrap(), "--resume", ck.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["steps.jsonl", "eigenvalues.csv", "final_estimate.json"] {
        assert_eq!(std::fs::read(full_out.join(f)).unwrap(), std::fs::read(part_out.join(f)).unwrap(), "{f}");
    }

    // A resume under a different system is a configuration error.
    v["system"]["dt"] = serde_json::json!(0.003);
    std::fs::write(&resume_cfg, v.to_string()).unwrap();
    let res = rsdmd(&["run", "--config", resume_cfg.to_str().unwrap(), "--resume", ck.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));

    let exp = dir.path().join("exported");
    for what in ["eigvals", "eigfuns", "rewardmap"] {
        let out = rsdmd(&["export", "--checkpoint", ck.to_str().unwrap(), "--what", what, "--out", exp.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{what}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let map = std::fs::read_to_string(exp.join("reward_map.csv")).unwrap();
    assert_eq!(map.lines().next().unwrap(), "action,center_x,center_y,visits,mean_reward,agent_value");
    assert_eq!(map.lines().count(), 17);
}

#[test]
fn simulate_and_regret_outputs() {
    let out = rsdmd(&["simulate", "--system", "duffing", "--x0", "0.5,-0.2", "--steps", "4", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("t,x0,x1"));
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().nth(1).unwrap().starts_with("0,0.5,-0.2"));

    let dir = tempfile::tempdir().unwrap();
    let out = rsdmd(&[
        "regret", "--arms", "1.0,0.5", "--eps", "0.1", "--horizon", "2000", "--seeds", "2", "--stride", "100", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(dir.path().join("regret_seed0.csv")).unwrap();
    assert_eq!(curve.lines().count(), 21);
    assert!(dir.path().join("summary.json").exists());

    let bad = rsdmd(&["regret", "--arms", "1.0,1.0", "--eps", "0.1", "--horizon", "2000"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn gradcheck_passes() {
    let out = rsdmd(&["gradcheck", "--seeds", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
}
