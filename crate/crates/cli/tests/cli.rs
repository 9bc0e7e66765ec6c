//! End-to-end tests of the `hallmhd` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hallmhd(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hallmhd"))
        .args(args)
        .env("HALLMHD_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_zero_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "initial.preset = zero\ndomain.M = 8\ntime.T = 0.2\noutput.dir = zero\n");
    let out = hallmhd(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("zero");
    assert_eq!(manifest(&dir)["exit_code"], 0);
    let ledger = fs::read_to_string(dir.join("ledger.csv")).unwrap();
    assert!(ledger.lines().skip(1).all(|l| l.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0)));
}

#[test]
fn verify_beltrami_marks_decay_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "initial.preset = beltrami\ntime.T = 1\noutput.dir = belt\n");
    let out = hallmhd(&["verify", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("belt/acceptance.json")).unwrap()).unwrap();
    assert_eq!(doc["passed"], true);
    let ids: Vec<_> = doc["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap().to_string()).collect();
    assert!(ids.contains(&"beltrami_decay".to_string()));
    for c in doc["criteria"].as_array().unwrap() {
        assert!(c["value"].is_number() && c["threshold"].is_number());
        assert_eq!(c["verdict"], "pass");
    }
}

#[test]
fn forced_failure_exits_two_with_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "initial.preset = random_smooth\ninitial.u_amplitude = 3\ninitial.b_amplitude = 3\n\
         initial.rho_mean = 1.5\ninitial.rho_amplitude = 0.5\ndomain.M = 8\ntime.T = 0.1\n\
         tol.picard_max_iter = 1\ntol.max_halving = 0\noutput.dir = fail\n",
    );
    let out = hallmhd(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let m = manifest(&tmp.path().join("fail"));
    assert_eq!(m["status"], "numerical_failure");
    for key in ["config_echo", "version", "timings", "windows", "verdicts", "failure"] {
        assert!(m.get(key).is_some(), "{key}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "modes.K = 2\ndomain.M = 7\nmodel.h = -1\n");
    let out = hallmhd(&["simulate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("aliasing") && err.contains("model.h"), "{err}");

    assert_eq!(hallmhd(&["simulate"], tmp.path()).status.code(), Some(1));
    assert_eq!(hallmhd(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(hallmhd(&["simulate", "--config", "/no/such/file"], tmp.path()).status.code(), Some(1));
    let cfg = write_config(tmp.path(), "time.T = 0.1\n");
    assert_eq!(hallmhd(&["study", "--config", &cfg, "--axis", "bogus"], tmp.path()).status.code(), Some(1));
    assert_eq!(hallmhd(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn study_along_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "domain.M = 12\ntime.T = 0.1\noutput.dir = study\n");
    let out = hallmhd(&["study", "--config", &cfg, "--axis", "tolerance", "--levels", "3"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("study/study.json")).unwrap()).unwrap();
    assert_eq!(rep["axis"], "tolerance");
    assert_eq!(rep["levels"].as_array().unwrap().len(), 3);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "initial.preset = random_smooth\ninitial.rho_mean = 2\ninitial.rho_amplitude = 0.5\n\
                initial.u_amplitude = 0.5\ndomain.M = 8\ntime.T = 0.2\noutput.snapshot_interval = 1\nseed = 11\n";
    let a = write_config(tmp.path(), &format!("{body}output.dir = a\n"));
    assert_eq!(hallmhd(&["simulate", "--config", &a], tmp.path()).status.code(), Some(0));
    let b = write_config(tmp.path(), &format!("{body}output.dir = b\n"));
    assert_eq!(hallmhd(&["simulate", "--config", &b], tmp.path()).status.code(), Some(0));
    for f in ["ledger.csv", "levelsets.csv", "snapshots/b_00002.bin", "snapshots/rho_00002.bin"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}
