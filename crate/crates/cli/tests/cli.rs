use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flexgrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexgrid")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_report_and_consolidate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "seed = 9\nn_houses = 2\neval_days = 1\n");
    let out = tmp.path().join("run");
    let out_s = out.to_str().unwrap();

    let o = flexgrid(&["run", "--config", &cfg, "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read(out.join("manifest.json")).unwrap();

    fs::remove_file(out.join("consolidated_response.csv")).unwrap();
    let o = flexgrid(&["consolidate", "--run", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("consolidated_response.csv").is_file());

    let o = flexgrid(&["report", "--run", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(out.join("manifest.json")).unwrap(), manifest);
}

#[test]
fn bad_config_fails_in_config_phase() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "warmup_days = 5\n");
    let o = flexgrid(&["run", "--config", &cfg, "--out", tmp.path().join("run").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[config]"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_fails_in_config_phase() {
    let o = flexgrid(&["run", "--config", "/nonexistent/cfg.toml", "--out", "/tmp/never"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[config]"));
}

#[test]
fn report_lists_missing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flexgrid(&["report", "--run", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("[report]"), "{err}");
    assert!(err.contains("events.csv") && err.contains("dispatch_traces.csv"), "{err}");
}

#[test]
fn consolidate_without_traces_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = flexgrid(&["consolidate", "--run", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[consolidate]"));
}

#[test]
fn oracle_check_prints_every_instance() {
    let o = flexgrid(&["oracle-check", "--seed", "3", "--instances", "5", "--max-ratio", "1e9"]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{}{}", out, stderr(&o));
    assert!(out.contains("fqi-dp:"));
    assert_eq!(out.lines().filter(|l| l.starts_with("gap ") && !l.starts_with("gap summary")).count(), 5);
}

#[test]
fn unknown_verb_is_rejected() {
    assert!(!flexgrid(&["launch"]).status.success());
}
