//! End-to-end checks of the binary: simulate -> estimate round trips,
//! deterministic output bytes, error exit codes, and a tables smoke run.

use std::path::Path;
use std::process::{Command, Output};

fn fodgmm(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fodgmm"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn simulate_then_estimate_fod() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let sim = fodgmm(
        &["--mode", "simulate", "--designs", "5", "--T", "12", "--n", "60", "--seed", "9", "--out", out],
        &[],
    );
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let panel = dir.path().join("panel_d5_T12_n60.csv");
    assert!(panel.exists());
    assert!(dir.path().join("panel_d5_T12_n60_truth.json").exists());

    let est = fodgmm(
        &[
            "--mode", "estimate", "--input", panel.to_str().unwrap(), "--estimator", "fod",
            "--plan", "limited", "--out", out, "--threads", "1",
        ],
        &[],
    );
    assert!(est.status.success(), "{}", String::from_utf8_lossy(&est.stderr));
    let fit: serde_json::Value = serde_json::from_str(&read(&dir.path().join("fit.json"))).unwrap();
    assert_eq!(fit["estimator"], "fod");
    assert_eq!(fit["beta_hat"].as_array().unwrap().len(), 2);
    assert_eq!(fit["q_star"], 5);
    // Point estimates land near the design truth on a healthy sample.
    let b1 = fit["beta_hat"][0].as_f64().unwrap();
    assert!((b1 - 0.25).abs() < 0.25, "beta1 {b1}");

    // Re-running produces byte-identical JSON.
    let first = read(&dir.path().join("fit.json"));
    let est2 = fodgmm(
        &[
            "--mode", "estimate", "--input", panel.to_str().unwrap(), "--estimator", "fod",
            "--plan", "limited", "--out", out, "--threads", "1",
        ],
        &[],
    );
    assert!(est2.status.success());
    assert_eq!(first, read(&dir.path().join("fit.json")));
}

#[test]
fn estimate_efficient_infeasible_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let sim = fodgmm(
        &["--mode", "simulate", "--designs", "5", "--T", "12", "--n", "10", "--seed", "3", "--out", out],
        &[],
    );
    assert!(sim.status.success());
    let panel = dir.path().join("panel_d5_T12_n10.csv");

    let est = fodgmm(
        &["--mode", "estimate", "--input", panel.to_str().unwrap(), "--estimator", "efficient", "--out", out],
        &[],
    );
    assert_eq!(est.status.code(), Some(4));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&est.stderr).trim()).unwrap();
    assert_eq!(err["error"]["code"], "infeasible_plan");
}

#[test]
fn invalid_design_id_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = fodgmm(
        &["--mode", "tables", "--designs", "37", "--T", "6", "--n", "20", "--reps", "2", "--out", out],
        &[],
    );
    assert_eq!(run.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&run.stderr).trim()).unwrap();
    assert_eq!(err["error"]["code"], "invalid_config");
}

#[test]
fn tables_smoke_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = fodgmm(
        &[
            "--mode", "tables", "--designs", "5,27", "--T", "8", "--n", "40", "--reps", "20",
            "--seed", "11", "--out", out, "--threads", "1",
        ],
        &[],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let summary = read(&dir.path().join("summary.csv"));
    assert!(summary.starts_with(
        "design,estimator,T,n,coefficient,level,coverage,mc_se,bias,rmse,rel_precision,failures"
    ));
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("coverage_beta1_designs05_05.csv").exists());
    assert!(dir.path().join("coverage_beta1_designs27_27.csv").exists());
    assert!(dir.path().join("relprec_beta1_T8.csv").exists());
    assert!(dir.path().join("run_config.json").exists());

    // The recorded config reproduces the run.
    let rerun_dir = tempfile::tempdir().unwrap();
    let rerun = fodgmm(
        &[
            "--mode", "tables",
            "--config", dir.path().join("run_config.json").to_str().unwrap(),
            "--out", rerun_dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(rerun.status.success(), "{}", String::from_utf8_lossy(&rerun.stderr));
    assert_eq!(summary, read(&rerun_dir.path().join("summary.csv")));
}

#[test]
fn env_var_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from_env");
    let run = fodgmm(
        &["--mode", "simulate", "--designs", "1", "--T", "6", "--n", "8", "--seed", "1"],
        &[("FODGMM_OUT_DIR", out.to_str().unwrap())],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("panel_d1_T6_n8.csv").exists());
}

#[test]
fn sweep_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = fodgmm(
        &[
            "--mode", "sweep", "--alpha", "0,1", "--T", "6,10", "--n", "30", "--reps", "10",
            "--seed", "2", "--out", out, "--threads", "1",
        ],
        &[],
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = read(&dir.path().join("sweep.csv"));
    assert!(csv.starts_with("alpha,n,T,mean_scaled_dev,mc_se,reps_effective,failures,skipped"));
    assert_eq!(csv.lines().count(), 1 + 4);
}
