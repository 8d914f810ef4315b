use std::path::Path;
use std::process::{Command, Output};

use exchange_cutoff::harness::CSV_HEADER;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_exchange-cutoff"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Drops the trailing wallclock column.
fn without_clock(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').map(|(a, _)| a.to_string()).unwrap_or_default()).collect()
}

const SIM: &[&str] = &["simulate", "--model", "gam", "--law", "beta:1", "--n", "32", "--t", "0,50,200", "--replicas", "300", "--seed", "17"];

#[test]
fn header_and_determinism() {
    let a = run(SIM);
    let b = run(SIM);
    assert!(a.status.success());
    let (a, b) = (String::from_utf8(a.stdout).unwrap(), String::from_utf8(b.stdout).unwrap());
    assert_eq!(a.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(without_clock(&a), without_clock(&b));
    assert_eq!(a.lines().count(), 1 + 3 * 4);
}

#[test]
fn thread_count_does_not_change_results() {
    let one = bin().args(SIM).env("RAYON_NUM_THREADS", "1").output().unwrap();
    let four = bin().args(SIM).env("RAYON_NUM_THREADS", "4").output().unwrap();
    assert_eq!(
        without_clock(&String::from_utf8(one.stdout).unwrap()),
        without_clock(&String::from_utf8(four.stdout).unwrap())
    );
}

#[test]
fn different_seeds_differ() {
    let mut other = SIM.to_vec();
    *other.last_mut().unwrap() = "18";
    let a = String::from_utf8(run(SIM).stdout).unwrap();
    let b = String::from_utf8(run(&other).stdout).unwrap();
    assert_ne!(without_clock(&a), without_clock(&b));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["simulate", "--n", "1"]).status.code(), Some(2));
    assert_eq!(run(&["teleport"]).status.code(), Some(2));
    assert_eq!(run(&["profile", "--law", "beta:0"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--t", "1000000", "--replicas", "100", "--budget", "10"]).status.code(), Some(3));
    assert_eq!(run(&["constants", "--out", "/nonexistent-dir/x.csv"]).status.code(), Some(4));
    assert_eq!(run(&["constants", "--config", "/nonexistent-dir/cfg"]).status.code(), Some(4));
}

#[test]
fn config_file_with_flag_override_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "command = constants\nlaw = beta:1\nn = 64\n").unwrap();
    let out = dir.path().join("out.csv");
    let status = bin()
        .args(["--config", cfg.to_str().unwrap(), "--n", "1024", "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let t_ent = csv.lines().find(|l| l.contains(",t_ent,")).unwrap();
    let value: f64 = t_ent.split(',').nth(8).unwrap().parse().unwrap();
    assert!((value - 1024.0 * 1024f64.ln()).abs() < 1e-9);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(&format!("{}.meta.json", out.display()))).unwrap()).unwrap();
    assert_eq!(meta["config"]["n"], 1024);
    assert!(meta["generator"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn bad_config_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "command = constants\nn: 5\n").unwrap();
    let out = run(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 2"));
}

#[test]
fn json_output() {
    let out = run(&["profile", "--model", "gam", "--law", "point-half", "--n", "64", "--beta=-1,0,1", "--replicas", "20", "--format", "json"]);
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert!(rows.iter().any(|r| r["statistic"] == "theorem_profile" && r["value"] == 1.0));
    assert!(rows.iter().any(|r| r["statistic"] == "large_pile_mass_gam"));
    assert_eq!(doc["metadata"]["config"]["command"], "profile");
}

#[test]
fn every_command_runs() {
    let cases: &[&[&str]] = &[
        &["constants", "--law", "two-point:0.25"],
        &["simulate", "--n", "16", "--replicas", "10"],
        &["piles", "--n", "20", "--t", "30", "--replicas", "20", "--oracle-samples", "10000"],
        &["identity", "--n", "20", "--t", "20,40", "--replicas", "20", "--oracle-samples", "10000"],
        &["contraction", "--model", "sem", "--n", "8", "--replicas", "50"],
        &["stationary", "--n", "8", "--replicas", "50"],
        &["profile", "--n", "32", "--beta", "0", "--replicas", "10"],
        &["monotonicity", "--model", "sem", "--n", "16", "--replicas", "20"],
    ];
    for args in cases {
        let out = run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8(out.stdout).unwrap().lines().count() > 1, "{args:?}");
    }
}
