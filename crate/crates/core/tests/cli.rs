//! The `fel-ce` binary as a user runs it.

use std::path::Path;
use std::process::{Command, Output};

fn fel_ce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fel-ce")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(fel_ce(&["--version"]).status.code(), Some(0));
    assert_eq!(fel_ce(&["derive", "--chi", "nope"]).status.code(), Some(2));
    assert_eq!(fel_ce(&["check", "--config", "/no/such/file.toml"]).status.code(), Some(2));
    // Tolerance zero cannot be met by floating point.
    let strict = fel_ce(&["verify", "--chi", "1.5", "--tol", "0"]);
    assert_eq!(strict.status.code(), Some(1), "{}", String::from_utf8_lossy(&strict.stderr));
}

#[test]
fn out_flag_writes_the_same_bytes_as_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("derive.csv");
    let printed = fel_ce(&["derive", "--seed", "5", "--chi", "3"]);
    let written = fel_ce(&["derive", "--seed", "5", "--chi", "3", "--out", path.to_str().unwrap()]);
    assert!(written.status.success());
    assert!(written.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), printed.stdout);
}

#[test]
fn experiment_configs_replay_through_other_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = fel_ce(&[
        "experiment", "--scenario", "fig3", "--replicates", "2", "--rounds", "20", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = out.join("configs/replicate_001.toml");
    let cfg = cfg.to_str().unwrap();

    let check = fel_ce(&["check", "--config", cfg]);
    assert!(check.status.success());
    assert_eq!(stdout(&check).lines().filter(|l| l.ends_with(",true") || l.contains(",true,")).count(), 9);

    let derive = fel_ce(&["derive", "--config", cfg, "--chi", "1"]);
    assert!(derive.status.success());

    let sim = fel_ce(&["simulate", "--config", cfg, "--agent", "alld", "--rounds", "10"]);
    assert!(sim.status.success());
    assert_eq!(stdout(&sim).lines().count(), 11);
}

#[test]
fn experiment_refuses_bad_values_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = fel_ce(&["experiment", "--scenario", "fig7_8", "--chi", "0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!Path::new(&out).join("manifest.json").exists());
}
