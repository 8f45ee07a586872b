use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scri-scatter"))
        .args(args)
        .current_dir(dir)
        .env_remove("SCRI_SCATTER_OUT")
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_values(path: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().skip(1).flat_map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect()
}

#[test]
fn chart_audit_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["chart-audit", "--out", "a"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir.path().join("a/summary.json"))["pass"], true);
    let m = json(&dir.path().join("a/manifest.json"));
    assert_eq!(m["command"], "chart-audit");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn scatter_on_zero_data_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("zero.ini"), "[data]\namp = 0\n").unwrap();
    let out = run(dir.path(), &["scatter", "--config", "zero.ini", "--out", "z"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for stem in ["scri_in", "scattered", "scri_forward"] {
        let v = csv_values(&dir.path().join(format!("z/{stem}.csv")));
        // every other column is the u lattice
        assert!(v.iter().skip(1).step_by(2).all(|x| *x == 0.0), "{stem}");
    }
    let s = csv_values(&dir.path().join("z/sigma0.csv"));
    assert!(s.chunks(4).all(|r| r[1] == 0.0 && r[2] == 0.0));
}

#[test]
fn converge_evolve_goursat_is_second_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["converge", "evolve-goursat", "--out", "c"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let order = json(&dir.path().join("c/converge.json"))["order"].as_f64().unwrap();
    assert!((1.9..=2.1).contains(&order), "{order}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for o in ["r1", "r2"] {
        assert!(run(dir.path(), &["evolve-goursat", "--out", o, "--threads", "2"]).status.success());
    }
    let mut n = 0;
    for e in std::fs::read_dir(dir.path().join("r1")).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "csv") {
            let other = dir.path().join("r2").join(p.file_name().unwrap());
            assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(other).unwrap());
            n += 1;
        }
    }
    assert!(n > 0);
}

#[test]
fn errors_exit_nonzero_with_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.ini"), "[chart]\nr_max = 0.6\n").unwrap();
    let out = run(dir.path(), &["scatter", "--config", "bad.ini"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(v["error"], "Config");
    assert!(v["message"].as_str().unwrap().contains("R_max"));
}

#[test]
fn solver_errors_leave_error_json_in_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfl.ini"), "[cauchy]\ncourant = 1.5\n").unwrap();
    let out = run(dir.path(), &["evolve-cauchy", "--config", "cfl.ini", "--out", "e"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&dir.path().join("e/error.json"));
    assert_eq!(v["error"], "CFLViolation");
}

#[test]
fn environment_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_scri-scatter"))
        .args(["lab", "density", "--out", "flag"])
        .current_dir(dir.path())
        .env("SCRI_SCATTER_OUT", "env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("env/lab_density.csv").exists());
    assert!(!dir.path().join("flag").exists());
}
