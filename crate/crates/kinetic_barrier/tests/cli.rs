//! End-to-end runs of the `kinetic-barrier` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_kinetic-barrier");

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .env_remove("KINETIC_BARRIER_THREADS")
        .output()
        .expect("binary runs")
}

/// Output files whose name starts with `prefix` and ends with `suffix`.
fn outputs(dir: &Path, prefix: &str, suffix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            name.starts_with(prefix) && name.ends_with(suffix)
        })
        .collect();
    v.sort();
    v
}

#[test]
fn compute_cs_writes_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["compute-cs"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = outputs(dir.path(), "compute-cs-", ".csv");
    assert_eq!(csv.len(), 1);
    let text = fs::read_to_string(&csv[0]).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "{text}");
    let fields: Vec<f64> = lines[0].split(',').map(|x| x.parse().unwrap()).collect();
    // reference value at d = 2, gamma = 0.5, s = 0.3
    let want = 2.562_048_372_663_993_5;
    assert!((fields[0] - want).abs() / want < 1e-9, "{}", fields[0]);
    assert!(fields[1] >= 0.0 && fields[1] < 1e-6);

    let manifest = outputs(dir.path(), "compute-cs-", ".manifest");
    assert_eq!(manifest.len(), 1);
    let m = fs::read_to_string(&manifest[0]).unwrap();
    for key in ["code_version", "gamma = 0.5", "exit_code = 0", "seed = 0"] {
        assert!(m.contains(key), "manifest lacks `{key}`:\n{m}");
    }
}

#[test]
fn verify_good_term_passes_on_the_maxwellian() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["verify", "--prop", "3.1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = outputs(dir.path(), "verify-", ".csv").into_iter().find(|p| !p.to_string_lossy().ends_with("-summary.csv"));
    let text = fs::read_to_string(rows.expect("rows csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("prop_id,q,v_norm,lhs,rhs_core,implied_constant,verdict"));
    let body: Vec<&str> = lines.collect();
    assert!(!body.is_empty());
    assert!(body.iter().all(|l| l.starts_with("3.1,") && l.ends_with(",PASS")), "{text}");
}

#[test]
fn verify_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(run_in(d.path(), &["verify", "--prop", "3.2"]).status.code(), Some(0));
    }
    let read = |d: &Path| -> Vec<Vec<u8>> { outputs(d, "verify-", ".csv").iter().map(|p| fs::read(p).unwrap()).collect() };
    let (ra, rb) = (read(a.path()), read(b.path()));
    assert_eq!(ra.len(), 2);
    assert_eq!(ra, rb);
}

#[test]
fn thread_count_does_not_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["eval-operator", "--v", "1.5,-0.5,0"];
    let one = Command::new(BIN).arg("--output-dir").arg(a.path()).args(args).env("KINETIC_BARRIER_THREADS", "1").output().unwrap();
    let three = Command::new(BIN).arg("--output-dir").arg(b.path()).args(args).env("KINETIC_BARRIER_THREADS", "3").output().unwrap();
    assert_eq!(one.status.code(), Some(0), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(three.status.code(), Some(0));
    let csv = |d: &Path| fs::read(&outputs(d, "eval-operator-", ".csv")[0]).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
    let manifest = fs::read_to_string(&outputs(b.path(), "eval-operator-", ".manifest")[0]).unwrap();
    assert!(manifest.contains("threads_used = 3"), "{manifest}");
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--config", "/nonexistent/kinetic.cfg", "compute-cs"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_inputs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["eval-operator", "--v", "1,2,oops"][..],
        &["verify", "--prop", "9.9"],
        &["scan", "--barrier", "sideways"],
        &["no-such-command"],
    ] {
        assert_eq!(run_in(dir.path(), args).status.code(), Some(2), "{args:?}");
    }
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "gamma = 0.5\nunknown_key = 3\n").unwrap();
    let out = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "compute-cs"]);
    assert_eq!(out.status.code(), Some(2));
    let env = Command::new(BIN)
        .arg("--output-dir")
        .arg(dir.path())
        .arg("compute-cs")
        .env("KINETIC_BARRIER_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(2));
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# soft potential\nd = 3\ngamma = 0\ns = 0.25\n").unwrap();
    let out = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "compute-cs"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&outputs(dir.path(), "compute-cs-", ".csv")[0]).unwrap();
    let value: f64 = text.trim().split(',').next().unwrap().parse().unwrap();
    let want = 17.216_761_886_397_173;
    assert!((value - want).abs() / want < 1e-9, "{value}");
}
