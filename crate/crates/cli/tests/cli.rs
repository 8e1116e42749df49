//! End-to-end runs of the binary.

use std::fs;
use std::process::Command;

fn polylab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polylab"))
}

#[test]
fn invalid_config_is_a_usage_error_naming_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"dim": 2, "beta": 5.0}"#).unwrap();
    let out = polylab().arg("--config").arg(&path).arg("constants").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dim") && err.contains("beta"), "{err}");

    fs::write(&path, r#"{"no_such_field": 1}"#).unwrap();
    let out = polylab().arg("--config").arg(&path).arg("constants").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = polylab().args(["--config", "/nonexistent/polylab.json", "gw"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = polylab().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn green_command_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"green_r_max": 8, "seed": 7}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = polylab()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--cache-dir")
        .arg(dir.path().join("cache"))
        .arg("green")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("green_values.csv")).unwrap();
    assert!(csv.starts_with("x,norm,green,asymptotic"));
    assert!(csv.lines().count() > 8);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("green.json")).unwrap()).unwrap();
    assert_eq!(json["command"], "green");
    assert_eq!(json["seed"], 7);
    assert_eq!(json["config"]["green_r_max"], 8);
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
    let g0 = json["values"]["g0"].as_f64().unwrap();
    assert!((g0 - 1.516386).abs() < 1e-5, "{g0}");
}

#[test]
fn gw_command_reports_checks_with_small_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"green_r_max": 8, "budgets": {"gw_replicates": 20000}}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = polylab()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--threads", "1", "gw"])
        .output()
        .unwrap();
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 1);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("gw.json")).unwrap()).unwrap();
    let checks = json["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 2);
    let passed = checks.iter().all(|c| c["passed"].as_bool().unwrap());
    assert_eq!(json["passed"].as_bool().unwrap(), passed);
    assert_eq!(code == 0, passed);
    assert!(out_dir.join("gw_decay.csv").exists());
}
