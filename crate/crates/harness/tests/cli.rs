use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lshawkes"))
}

fn presets() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

#[test]
fn simulate_writes_versioned_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ev.csv");
    let status = bin()
        .args(["simulate", "--model"])
        .arg(presets().join("poisson.cfg"))
        .args(["--T", "1000", "--seed", "7", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# hawkes-events v1 d=1 T=1000\n"), "{}", &text[..60]);
}

#[test]
fn estimate_theta_has_one_plus_j_entries() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("ev.csv");
    let fit = dir.path().join("fit.json");
    let grid = dir.path().join("grid.csv");
    assert!(bin()
        .args(["simulate", "--model", "preset:poisson", "--T", "1000", "--seed", "7", "--out"])
        .arg(&ev)
        .status()
        .unwrap()
        .success());
    let status = bin()
        .args(["estimate", "--events"])
        .arg(&ev)
        .args(["--x0", "0.5", "--h", "0.2", "--J", "8", "--out"])
        .arg(&fit)
        .arg("--eval-out")
        .arg(&grid)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    assert_eq!(v["theta_hat"].as_array().unwrap().len(), 9);
    let csv = std::fs::read_to_string(&grid).unwrap();
    assert!(csv.starts_with("u,m,mu_hat\n"));
    assert_eq!(csv.lines().count(), 1 + 201);
}

#[test]
fn moments_match_stationary_closed_form() {
    let out = bin()
        .args(["moments", "--model"])
        .arg(presets().join("preset2.cfg"))
        .args(["--tol", "1e-6"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    // (I - Gamma)^{-1} nu with Gamma = [[.4, .2], [.2, .4]], nu = (.5, .3).
    let expect = [1.125, 0.875];
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let l: usize = f[1].parse().unwrap();
        let v: f64 = f[2].parse().unwrap();
        assert!((v - expect[l - 1]).abs() < 1e-5, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 22);
}

#[test]
fn exit_codes() {
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(
        bin().args(["simulate", "--model", "preset:poisson", "--bogus"]).output().unwrap().status.code(),
        Some(1)
    );
    assert_eq!(
        bin().args(["estimate", "--events", "/nonexistent/ev.csv", "--out", "/tmp/x.json"]).output().unwrap().status.code(),
        Some(2)
    );
    assert_eq!(
        bin().args(["simulate", "--model", "preset:nope", "--out", "/tmp/x.csv"]).output().unwrap().status.code(),
        Some(2)
    );
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn project_reports_epsilon() {
    let out = bin()
        .args(["project", "--model", "preset:piecewise", "--J", "2", "--order", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["eps"].as_f64().unwrap() < 1e-12);
}
