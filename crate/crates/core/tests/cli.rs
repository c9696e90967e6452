use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use privpower::scenario::parse_csv;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn privpower(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privpower")).args(args).output().unwrap()
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("scenario.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn every_bundled_scenario_runs_and_verifies() {
    for entry in fs::read_dir(scenario("")).unwrap() {
        let path = entry.unwrap().path();
        let out = tempfile::tempdir().unwrap();
        let o = privpower(&[
            "--scenario",
            path.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
            "--verify",
        ]);
        assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("verified"));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = privpower(&[
            "--scenario",
            scenario("uniform21_heuristics.json").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    for name in ["curve.csv", "heuristics.csv", "sim.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn task_flag_selects_outputs() {
    let out = tempfile::tempdir().unwrap();
    let o = privpower(&[
        "--scenario",
        scenario("uniform21_heuristics.json").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--task",
        "heuristics",
    ]);
    assert!(o.status.success());
    assert!(out.path().join("heuristics.csv").exists());
    assert!(!out.path().join("curve.csv").exists());
    assert!(!out.path().join("sim.json").exists());
}

#[test]
fn empty_task_list_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        dir.path(),
        r#"{"users": [{"kind": "binary", "low": 0, "high": 1, "p_low": 0.5}],
            "power_grid": [0.0, 0.25], "unit": "bits", "tasks": []}"#,
    );
    let out = dir.path().join("out");
    let o = privpower(&["--scenario", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let written = fs::read_dir(&out).map(|d| d.count()).unwrap_or(0);
    assert_eq!(written, 0);
}

#[test]
fn unit_flag_switches_to_nats() {
    let out = tempfile::tempdir().unwrap();
    let o = privpower(&[
        "--scenario",
        scenario("binary_p05.json").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--task",
        "curve",
        "--unit",
        "nats",
    ]);
    assert!(o.status.success());
    let rows = parse_csv(&fs::read_to_string(out.path().join("curve.csv")).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.unit == privpower::Unit::Nats));
    let first = rows.iter().find(|r| r.power == 0.0).unwrap();
    assert!((first.leakage - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn seed_flag_overrides_simulation_seed() {
    let run = |seed: &str| {
        let out = tempfile::tempdir().unwrap();
        let o = privpower(&[
            "--scenario",
            scenario("binary_p05.json").to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
            "--task",
            "simulate",
            "--seed",
            seed,
        ]);
        assert!(o.status.success());
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.path().join("sim.json")).unwrap()).unwrap();
        report
    };
    let a = run("11");
    let b = run("12");
    assert_eq!(a["report"]["seed"], 11);
    assert_eq!(b["report"]["seed"], 12);
    assert_ne!(a["report"]["empirical_power"], b["report"]["empirical_power"]);
    assert_eq!(a, run("11"));
}

#[test]
fn malformed_scenarios_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        "{ not json",
        r#"{"users": [{"kind": "binary", "low": 0, "high": 1, "p_low": 1.5}], "power_grid": [0], "unit": "bits", "tasks": ["curve"]}"#,
        r#"{"users": [], "power_grid": [0], "unit": "bits", "tasks": ["curve"]}"#,
        r#"{"users": [{"kind": "binary", "low": 0, "high": 1, "p_low": 0.5}], "power_grid": [-1], "unit": "bits", "tasks": ["curve"]}"#,
        r#"{"users": [{"kind": "binary", "low": 0, "high": 1, "p_low": 0.5}], "power_grid": [0], "unit": "bits", "tasks": ["curve"], "extra": 1}"#,
    ] {
        let path = write_scenario(dir.path(), body);
        let o = privpower(&["--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{body}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn verify_rejects_tampered_curve() {
    let out = tempfile::tempdir().unwrap();
    let out_dir = out.path().to_str().unwrap();
    let binary = scenario("binary_p05.json");
    let o = privpower(&["--scenario", binary.to_str().unwrap(), "--out", out_dir, "--task", "curve"]);
    assert!(o.status.success());

    // make the curve increase at its last point
    let path = out.path().join("curve.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let last = lines.len() - 1;
    let mut fields: Vec<String> = lines[last].split(',').map(str::to_owned).collect();
    fields[1] = "5.0e0".into();
    lines[last] = fields.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();

    let dir = tempfile::tempdir().unwrap();
    let idle = write_scenario(
        dir.path(),
        r#"{"users": [{"kind": "binary", "low": 0, "high": 1, "p_low": 0.5}],
            "power_grid": [0.0], "unit": "bits", "tasks": []}"#,
    );
    let o = privpower(&["--scenario", idle.to_str().unwrap(), "--out", out_dir, "--verify"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_scenario_file_is_an_error() {
    let o = privpower(&["--scenario", "/nonexistent/scenario.json"]);
    assert!(!o.status.success());
}
