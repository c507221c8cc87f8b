//! End-to-end tests of the command-line interface: file outputs, exit
//! codes and determinism.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_omega-dividends");

fn reference_config(dir: &Path, h: f64, x_max: f64, n_paths: usize) -> std::path::PathBuf {
    let cfg = format!(
        r#"{{
  "model": {{
    "mu": 0.075, "sigma": 0.5, "jump_intensity": 0.5,
    "jump_mixture": [{{"weight": 1.0, "rate": 9.0}}]
  }},
  "omega": {{
    "a": -1.0, "phi": 1.5,
    "segments": [
      {{"kind": "linear", "from": -1.0, "to": 0.0, "value_at_from": 1.5, "slope": -1.0}}
    ]
  }},
  "q": 0.025,
  "beta": 0.001,
  "grid": {{"h": {h}, "x_max": {x_max}}},
  "simulation": {{
    "n_paths": {n_paths}, "dt": 0.001, "t_max": 560.0, "seed": 42,
    "mode": "killing_clock"
  }}
}}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, cfg).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn solve_writes_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path(), 1e-3, 6.0, 100);
    let out_dir = dir.path().join("out");
    let out = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("solve_report.json")).unwrap())
            .unwrap();
    assert!(report["residual_sup"].as_f64().unwrap() < 1e-8);
    assert_eq!(report["passed"], serde_json::json!(true));
    let csv = std::fs::read_to_string(out_dir.join("omega_scale.csv")).unwrap();
    assert!(csv.starts_with("# config = "));
    assert!(csv.contains("x,H,Hprime"));
}

#[test]
fn solve_flags_coarse_grid_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path(), 1e-3, 6.0, 100);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--h",
        "0.1",
    ]);
    assert_eq!(code(&out), 2);
    // the report is still written, with the residual flagged
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("solve_report.json")).unwrap())
            .unwrap();
    assert!(report["residual_sup"].as_f64().unwrap() > 1e-8);
    assert_eq!(report["passed"], serde_json::json!(false));
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("machine-readable stderr");
    assert_eq!(err["exit_code"], serde_json::json!(2));
}

#[test]
fn missing_phi_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = reference_config(dir.path(), 1e-3, 6.0, 100);
    let broken = std::fs::read_to_string(&cfg_path)
        .unwrap()
        .replace("\"phi\": 1.5,", "");
    std::fs::write(&cfg_path, broken).unwrap();
    let out = run(&[
        "solve",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], serde_json::json!("config"));
}

#[test]
fn optimize_reports_interior_then_corner_case() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path(), 1e-3, 6.0, 100);
    let out_dir = dir.path().join("out");
    let out = run(&["optimize", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let opt: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("optimum.json")).unwrap())
            .unwrap();
    assert_eq!(opt["case"], serde_json::json!("interior"));
    assert!(opt["c1_star"].as_f64().unwrap() > 0.0);
    assert!(out_dir.join("g0_curve.csv").exists());
    assert!(out_dir.join("g1_curve.csv").exists());

    let out2 = run(&[
        "optimize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--beta",
        "0.02",
    ]);
    assert_eq!(code(&out2), 0);
    let opt2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("optimum.json")).unwrap())
            .unwrap();
    assert_eq!(opt2["case"], serde_json::json!("corner_beta"));
    assert_eq!(opt2["c1_star"].as_f64().unwrap(), 0.0);
}

#[test]
fn nonpositive_beta_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path(), 1e-3, 6.0, 100);
    let out = run(&[
        "optimize",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--beta",
        "-0.001",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn value_checks_pass_on_the_reference_setup() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path(), 1e-3, 6.0, 100);
    let out_dir = dir.path().join("out");
    let out = run(&["value", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("value_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], serde_json::json!(true));
    assert!(report["checks"]["c1_fit_residual"].as_f64().unwrap() < 1e-3);
    assert!(report["checks"]["transaction_bound_worst"].as_f64().unwrap() >= -1e-9);
    let csv = std::fs::read_to_string(out_dir.join("value.csv")).unwrap();
    assert!(csv.contains("x,v,vprime"));
}

#[test]
fn simulate_writes_deterministic_report_with_z_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path(), 2e-3, 6.0, 400);
    let out_dir = dir.path().join("out");
    // run value first so the z-scores against the analytic curve appear
    let out = run(&["value", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report_path = out_dir.join("mc_report.json");
    let mut first: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(first["mode_equivalence_passed"], serde_json::json!(true));
    let runs = first["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 5);
    for r in runs {
        assert!(r["analytic"].is_number(), "z-scores need the analytic curve");
        assert!(r["mode_z"].as_f64().unwrap() < 3.0);
    }
    // identical seeds: bytes identical except the timestamp field
    let out2 = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out2), 0);
    let mut second: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    first.as_object_mut().unwrap().remove("timestamp");
    second.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(first, second);
}

#[test]
fn sweep_beta_brackets_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path(), 1e-3, 6.0, 100);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sweep-beta",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--betas",
        "0.001:0.02:0.001",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("beta_sweep.csv")).unwrap();
    let mut transition = None;
    let mut prev_beta: Option<f64> = None;
    let mut prev_positive = None;
    for line in csv.lines() {
        if line.starts_with('#') || line.starts_with("beta") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let beta: f64 = fields[0].parse().unwrap();
        let c1: f64 = fields[1].parse().unwrap();
        let positive = c1 > 0.0;
        if let (Some(pb), Some(pp)) = (prev_beta, prev_positive) {
            if pp && !positive {
                transition = Some((pb, beta));
            }
        }
        prev_beta = Some(beta);
        prev_positive = Some(positive);
    }
    let (lo, hi) = transition.expect("sweep must cross the threshold");
    assert!(
        (0.008..=0.010).contains(&lo) || (0.008..=0.010).contains(&hi),
        "transition ({lo}, {hi}) should bracket the threshold near 0.009"
    );
}

#[test]
fn repeated_runs_produce_identical_csv_payloads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference_config(dir.path(), 1e-3, 4.0, 100);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert_eq!(code(&out), 0);
    }
    let a = std::fs::read(out_a.join("omega_scale.csv")).unwrap();
    let b = std::fs::read(out_b.join("omega_scale.csv")).unwrap();
    assert_eq!(a, b);
}
