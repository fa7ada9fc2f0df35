//! End-to-end runs of the `lossav` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lossav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lossav")).args(args).output().expect("run lossav")
}

fn ok(args: &[&str]) -> String {
    let o = lossav(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV written by the tool (version comment and header skipped).
fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn header(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# format_version: 1"));
    lines.next().unwrap().to_string()
}

#[test]
fn simulate_then_estimate_recovers_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["simulate", "--n", "1000000", "--seed", "3", "-o", out]);
    assert_eq!(header(&dir.path().join("offers.csv")), "phi,eps,offer,accepted");
    assert_eq!(header(&dir.path().join("realized.csv")), "growth");
    assert_eq!(header(&dir.path().join("binned.csv")), "bin_mid,prop,count");
    assert_eq!(rows(&dir.path().join("binned.csv")).len(), 1001);

    let input = dir.path().join("binned.csv");
    ok(&["estimate", input.to_str().unwrap(), "--bootstrap", "1000", "-o", out]);
    let est = json(&dir.path().join("estimate.json"));
    let lambda = est["behavioral"]["lambda_hat"].as_f64().unwrap();
    let se = est["behavioral"]["ses"]["lambda"].as_f64().unwrap();
    assert!((lambda - 1.123).abs() < 3.0 * se, "lambda {lambda} se {se}");
    assert_eq!(est["format_version"], "1");
    assert!(est["qlr"]["reject"].as_bool().unwrap());
    assert_eq!(header(&dir.path().join("fit.csv")), "bin_mid,empirical,predicted_behavioral,predicted_standard");
    assert_eq!(rows(&dir.path().join("fit.csv")).len(), 200);

    // raw growth input gives the same estimate as its binned counts
    let raw = dir.path().join("raw");
    let raw_out = raw.to_str().unwrap();
    let growth = dir.path().join("realized.csv");
    ok(&["estimate", growth.to_str().unwrap(), "--bootstrap", "1000", "-o", raw_out]);
    let est_raw = json(&raw.join("estimate.json"));
    assert_eq!(est_raw["behavioral"], est["behavioral"]);
}

#[test]
fn restricted_estimate_has_no_distance_test() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["simulate", "--n", "300000", "--binned-only", "-o", out]);
    assert!(!dir.path().join("offers.csv").exists());
    let input = dir.path().join("binned.csv");
    let input = input.to_str().unwrap();
    ok(&["estimate", input, "--analytic-cov", "--restrict-lambda", "-o", out]);
    let est = json(&dir.path().join("estimate.json"));
    assert!(est["qlr"].is_null());
    assert!(est["standard"].is_null());
    assert_eq!(est["behavioral"]["restricted"], true);
    assert_eq!(est["behavioral"]["gof_dof"], 198);
    ok(&["estimate", input, "--analytic-cov", "-o", out]);
    assert!(json(&dir.path().join("estimate.json"))["qlr"]["chi2"].is_number());
}

#[test]
fn anomalies_detect_loss_aversion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["simulate", "--n", "1000000", "--lambda", "1.5", "--binned-only", "-o", out]);
    let input = dir.path().join("binned.csv");
    ok(&["anomalies", input.to_str().unwrap(), "--bootstrap", "1000", "-o", out]);
    let rep = &json(&dir.path().join("anomalies.json"))["report"];
    let d = rep["discontinuity_pp"].as_f64().unwrap();
    let se = rep["ses"]["discontinuity_pp"].as_f64().unwrap();
    assert!(d > 0.0 && d / se > 2.0, "discontinuity {d} se {se}");
    let bins = dir.path().join("anomalies_bins.csv");
    assert_eq!(header(&bins), "bin_mid,raw_prop,smoothed_cut,smoothed_raise");
    assert_eq!(rows(&bins).len(), 201);

    let stdout = ok(&["anomalies", input.to_str().unwrap(), "--bootstrap", "0", "--bandwidth", "rot", "-o", out]);
    assert!(stdout.starts_with("bandwidth cuts "), "{stdout}");
}

#[test]
fn subsidy_sweep_and_ban_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["policy", "subsidy", "--delta-sd", "0.6", "--lambda-grid", "1:2:0.05", "-o", out]);
    let sweep = rows(&dir.path().join("subsidy_sweep.csv"));
    assert_eq!(sweep.len(), 21);
    let total: Vec<f64> = sweep.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(total.windows(2).all(|w| w[1] < w[0]), "{total:?}");

    ok(&["policy", "ban", "--eta-scale", "0", "--mc-n", "0", "-o", out]);
    let a = std::fs::read(dir.path().join("subsidy_sweep.csv")).unwrap();
    let b = std::fs::read(dir.path().join("ban_sweep.csv")).unwrap();
    assert_eq!(a, b);
    let sub = json(&dir.path().join("subsidy.json"));
    let ban = json(&dir.path().join("ban.json"));
    assert_eq!(sub["behavioral"], ban["outcome"]);
}

#[test]
fn vacancies_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["policy", "vacancies", "--c", "0.5", "--pbar", "0.1", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(stdout.trim(), "0.1");
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "growth\n0.01\n-0.02\nabc\n").unwrap();
    let o = lossav(&["anomalies", input.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // invalid parameter
    assert_eq!(lossav(&["bargain", "--beta", "1.5", "--lambda", "1", "--eps", "0", "--phi", "1"]).status.code(), Some(2));
    assert_eq!(lossav(&["simulate", "--lambda", "0.5", "-o", out]).status.code(), Some(2));
    // a bandwidth narrower than a bin leaves the local fit without support
    ok(&["simulate", "--n", "100000", "--binned-only", "-o", out]);
    let input = dir.path().join("binned.csv");
    let o = lossav(&["anomalies", input.to_str().unwrap(), "--bandwidth", "0.001", "--bootstrap", "0", "-o", out]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"format_version": "1", "seed": 9, "output_dir": "{}", "model": {{"lambda": 1.5, "sigma_phi": 0.2}}, "simulate": {{"n": 5000, "binned_only": true}}}}"#,
            out.display()
        ),
    )
    .unwrap();
    ok(&["--config", cfg.to_str().unwrap(), "simulate", "--lambda", "1.25"]);
    let s = json(&out.join("summary.json"));
    assert_eq!(s["params"]["lambda"], 1.25);
    assert_eq!(s["params"]["phi"]["scale"], 0.2);
    assert_eq!(s["seed"], 9);
    assert_eq!(s["n_jobseekers"], 5000);

    std::fs::write(&cfg, r#"{"model": {"lamda": 1.5}}"#).unwrap();
    let o = lossav(&["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));

    std::fs::write(&cfg, r#"{"estimate": {"input": "/no/such/input.csv"}}"#).unwrap();
    assert_eq!(lossav(&["--config", cfg.to_str().unwrap(), "policy", "mix"]).status.code(), Some(2));
}

#[test]
fn bargain_prints_json() {
    let v: Value = serde_json::from_str(&ok(&["bargain", "--beta", "0.5", "--lambda", "2", "--eps", "0.2", "--phi", "0.15"])).unwrap();
    assert_eq!(v["outcome"]["status"], "salary_match");
    assert_eq!(v["outcome"]["r"], 0.0);
    assert!(v["dcut_dlambda"].is_null());
}
