use std::path::Path;
use std::process::Command;

use rollgov::harness::{read_metrics, DECISIONS_FILE, MANIFEST_FILE, METRICS_FILE, TRACES_FILE};

fn rollgov(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rollgov"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn sweep_into(dir: &Path) {
    let out = rollgov(&[
        "sweep",
        "-o",
        dir.to_str().unwrap(),
        "-g",
        "off,lrg,ecg",
        "-a",
        "30,150",
        "--no-timing",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn repeated_sweeps_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let files = [TRACES_FILE, DECISIONS_FILE, METRICS_FILE, MANIFEST_FILE];
    let snapshot = || files.map(|name| std::fs::read(dir.path().join(name)).unwrap());
    sweep_into(dir.path());
    let first = snapshot();
    sweep_into(dir.path());
    for (name, (x, y)) in files.iter().zip(first.iter().zip(snapshot().iter())) {
        assert!(!x.is_empty(), "{name} is empty");
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn sweep_metrics_cover_every_run_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    sweep_into(dir.path());
    let rows = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    // Three governors, two amplitudes, three baselines each.
    assert_eq!(rows.len(), 18);
    assert!(rows.iter().all(|r| r.error.is_empty()));
    let lrg_150 = rows.iter().find(|r| r.governor == "lrg" && r.amplitude_deg == 150.0).unwrap();
    assert!(lrg_150.eta_lift.unwrap() > 0.99);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["runs"], 6);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let report = rollgov(&["report", dir.path().to_str().unwrap()]);
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("ecg") && text.contains("0 failed rows"));
}

#[test]
fn montecarlo_writes_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let out = rollgov(&[
        "montecarlo",
        "-o",
        dir.path().to_str().unwrap(),
        "-g",
        "lrg",
        "-a",
        "120",
        "--samples",
        "3",
        "--sigma-phi",
        "0.1",
        "--no-timing",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stats = std::fs::read_to_string(dir.path().join("montecarlo.csv")).unwrap();
    let mut lines = stats.lines();
    assert!(lines.next().unwrap().starts_with("governor,amplitude_deg,runs"));
    assert!(lines.next().unwrap().starts_with("lrg,120.0,3,0"));
}

#[test]
fn bad_arguments_are_rejected() {
    let out = rollgov(&["sweep", "-g", "pid"]);
    assert!(!out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let out = rollgov(&["run", "-o", dir.path().to_str().unwrap(), "--amplitude", "400"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("amplitude"));
}
