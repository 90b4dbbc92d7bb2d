use std::path::Path;
use std::process::{Command, Output};

fn mobscope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobscope"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn mobscope")
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().expect("stderr has a line");
    serde_json::from_str(last).expect("stderr ends in one JSON line")
}

#[test]
fn usage_errors_exit_two_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = mobscope(dir.path(), &["estimate", "--estimator", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");
}

#[test]
fn missing_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = mobscope(dir.path(), &["estimate", "-i", "nope.csv", "-o", "f.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let e = error_line(&out);
    assert_eq!(e["error"], "io");
    assert!(e["message"].as_str().unwrap().contains("nope.csv"));
}

#[test]
fn malformed_csv_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "day_id,t,x\n0,0.5,1\n").unwrap();
    let out = mobscope(dir.path(), &["estimate", "-i", "bad.csv", "-o", "f.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out)["error"].is_string());
}

#[test]
fn zero_threads_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_mobscope"))
        .current_dir(dir.path())
        .env("MOBSCOPE_THREADS", "0")
        .args(["simulate", "--days", "2", "-o", "d.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "invalid_argument");
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let sim = mobscope(
        dir.path(),
        &[
            "simulate", "--days", "4", "--m", "40", "--seed", "3", "-o", "d.csv",
        ],
    );
    assert!(
        sim.status.success(),
        "{}",
        String::from_utf8_lossy(&sim.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("day_id,t,x,y,pattern"));
    assert_eq!(lines.count(), 4 * 40);

    let est = mobscope(dir.path(), &["estimate", "-i", "d.csv", "-o", "f.csv"]);
    assert!(
        est.status.success(),
        "{}",
        String::from_utf8_lossy(&est.stderr)
    );
    let grid = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
    assert!(grid.lines().count() > 1);
}
