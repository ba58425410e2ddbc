use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").canonicalize().unwrap()
}

fn levyfront(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levyfront")).args(args).env("LEVYFRONT_LOG", "error").output().unwrap()
}

/// Smoke config rewritten into `dir` with an absolute problem path and the given graded rows.
fn smoke_with_checks(dir: &Path, checks: &[&str]) -> PathBuf {
    let mut cfg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(configs().join("smoke.json")).unwrap()).unwrap();
    let problem = configs().join(cfg["problem"].as_str().unwrap());
    cfg["problem"] = problem.display().to_string().into();
    cfg["checks"] = checks.iter().map(|c| serde_json::Value::from(*c)).collect();
    let path = dir.join("cfg.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn run_passes_and_prints_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = configs().join("smoke.json");
    let o = levyfront(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("verdict: PASS"), "{stdout}");
    assert!(out.join("report/report.html").exists());

    let o = levyfront(&["report", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn stage_subcommand_stops_after_its_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = configs().join("smoke.json");
    let o = levyfront(&["eigen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("eigen/eigen.json").exists());
    assert!(!out.join("steady").exists());
    let written: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["seed"], 5);
}

#[test]
fn failed_graded_row_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // The smoke horizon is far too short for a rate fit.
    let cfg = smoke_with_checks(dir.path(), &["front_rate"]);
    let out = dir.path().join("out");
    let o = levyfront(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict: FAIL"));
}

#[test]
fn missing_config_exits_with_one() {
    let o = levyfront(&["validate", "--config", "/nonexistent/cfg.json", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
