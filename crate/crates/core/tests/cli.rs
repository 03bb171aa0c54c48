//! The binary end to end: exit codes, output files, seeding.

use std::path::Path;
use std::process::{Command, Output};

use infinilog::harness::{EventKind, History};

fn infinilog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infinilog"))
        .args(args)
        .env_remove("INFINILOG_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn simulate_to(dir: &Path, name: &str, extra: &[&str]) -> History {
    let path = dir.join(name);
    let mut args = vec![
        "simulate",
        "--algo",
        "weaklog-cas",
        "--procs",
        "5",
        "--ops",
        "2",
        "--out",
        path.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let out = infinilog(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    History::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_passes_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let h = simulate_to(dir.path(), "run.json", &["--seed", "3"]);
    assert_eq!(h.operations().len(), 10);
    let verdict: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run.verdict.json")).unwrap(),
    )
    .unwrap();
    assert!(verdict.is_object());
}

#[test]
fn the_seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate_to(dir.path(), "a.json", &["--seed", "11"]);
    let path = dir.path().join("b.json");
    let out = Command::new(env!("CARGO_BIN_EXE_infinilog"))
        .args([
            "simulate",
            "--algo",
            "weaklog-cas",
            "--procs",
            "5",
            "--ops",
            "2",
            "--out",
            path.to_str().unwrap(),
        ])
        .env("INFINILOG_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let b = History::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = simulate_to(dir.path(), "c.json", &["--seed", "12"]);
    assert_ne!(a.events, c.events);
}

#[test]
fn check_accepts_a_recorded_history() {
    let dir = tempfile::tempdir().unwrap();
    simulate_to(dir.path(), "run.json", &[]);
    let out = infinilog(&["check", dir.path().join("run.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn check_rejects_a_tampered_history() {
    let dir = tempfile::tempdir().unwrap();
    let mut h = simulate_to(dir.path(), "run.json", &[]);
    let last = h
        .events
        .iter_mut()
        .rev()
        .find(|e| e.kind == EventKind::Respond)
        .unwrap();
    last.out = serde_json::json!([]);
    let path = dir.path().join("tampered.json");
    std::fs::write(&path, h.to_json()).unwrap();
    let out = infinilog(&["check", path.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn explore_and_stress_succeed() {
    let out = infinilog(&[
        "explore",
        "--algo",
        "weaklog-cas",
        "--procs",
        "3",
        "--reduction",
        "sleep-sets",
    ]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("schedules"));
    let out = infinilog(&[
        "stress",
        "--algo",
        "weaklog-cons",
        "--threads",
        "2",
        "--ops",
        "200",
    ]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("ops/s"));
}

#[test]
fn errors_exit_with_two() {
    assert_eq!(
        code(&infinilog(&["simulate", "--algo", "universal:nope"])),
        2
    );
    assert_eq!(code(&infinilog(&["check", "/nonexistent/history.json"])), 2);
    assert_eq!(code(&infinilog(&["frobnicate"])), 2);
}
