use std::path::{Path, PathBuf};
use std::process::Command;

use nlhomog::cli::{Overrides, RunConfig};
use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_nlhomog"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn constant_theta_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("theta");
    let cfg = config("constant.toml");
    assert_eq!(run(&["theta", "--config", cfg.to_str().unwrap()], &out), 0);
    let s = summary(&out);
    let theta = s["stages"]["theta"]["theta"][0][0].as_f64().unwrap();
    assert!((theta - 3.0).abs() < 1e-8, "{theta}");
    assert_eq!(s["stages"]["theta"]["theta_closed_form"][0][0].as_f64().unwrap(), 3.0);
    assert_eq!(s["passed"], true);
    let hash = RunConfig::load(&cfg, &Overrides::default()).unwrap().hash();
    assert_eq!(s["config_hash"], hash);
    assert_eq!(s["config"]["numeric"]["n"], 128);
    for f in ["run.log", "theta.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // full-precision CSV round trip
    let csv = std::fs::read_to_string(out.join("theta.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').skip(2).map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], theta);
}

#[test]
fn constant_correctors_vanish() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    assert_eq!(run(&["correctors", "--config", config("constant.toml").to_str().unwrap()], &out), 0);
    let s = summary(&out);
    assert_eq!(s["stages"]["correctors"]["kappa1_identically_zero"], true);
    let csv = std::fs::read_to_string(out.join("correctors.csv")).unwrap();
    assert_eq!(csv.lines().count(), 129);
}

#[test]
fn zero_paths_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("n0");
    let code = run(
        &["simulate", "--config", config("demo.toml").to_str().unwrap(), "--set", "numeric.paths=0"],
        &out,
    );
    assert_eq!(code, 2);
    assert!(!out.exists());
    let code = run(&["theta", "--config", config("demo.toml").to_str().unwrap(), "--set", "numeric.bogus=1"], &out);
    assert_eq!(code, 2);
}

#[test]
fn coarse_grid_is_flagged_but_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("coarse");
    let code = run(&["theta", "--config", config("coarse.toml").to_str().unwrap()], &out);
    assert!(code == 0 || code == 1);
    let s = summary(&out);
    let warnings = s["warnings"].as_array().unwrap();
    assert!(!warnings.is_empty());
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("under-resolved")));
    assert!(s["stages"]["theta"]["diagnostics"]["pd_margin"].is_number());
}

#[test]
fn failed_verdict_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fail");
    // a 4% step in eps (aligned: R·n_cell/eps = 416) cannot shrink the error by the required factor
    let code = run(
        &["resolvent-study", "--config", config("demo.toml").to_str().unwrap(), "--set", "numeric.eps=[0.4, 0.38461538461538464]"],
        &out,
    );
    assert_eq!(code, 1);
    assert_eq!(summary(&out)["passed"], false);
    assert!(out.join("resolvent.csv").exists() && out.join("resolvent.svg").exists());
}

#[test]
fn numerical_error_keeps_partial_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("err");
    let code = run(
        &["full-report", "--config", config("demo.toml").to_str().unwrap(), "--set", "numeric.half_width=1.0"],
        &out,
    );
    assert_eq!(code, 2);
    let s = summary(&out);
    assert!(s["error"].as_str().unwrap().contains("box"));
    assert!(s["stages"]["theta"].is_object());
    assert!(s["stages"].get("simulate").is_none());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("demo.toml");
    let args = [
        "full-report",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "numeric.paths=5000",
        "--set",
        "numeric.eps=[0.4, 0.2]",
        "--seed",
        "99",
    ];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&args, &a);
    let mut with_threads = args.to_vec();
    with_threads.extend(["--threads", "2"]);
    run(&with_threads, &b);
    let sa = std::fs::read(a.join("summary.json")).unwrap();
    let sb = std::fs::read(b.join("summary.json")).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(summary(&a)["config"]["numeric"]["seed"], 99);
}
