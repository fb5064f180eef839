use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsp")).args(args).output().unwrap()
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    qsp(&args)
}

#[test]
fn classify_reports_clause() {
    let out = qsp(&["classify", "--coeff", "(1+r)^-1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out.stdout)["clause"], "global");
    let out = qsp(&["classify", "--coeff", "(1+r)^-2"]);
    let v = json(&out.stdout);
    assert_eq!(v["clause"], "blowup-via-(1)");
    assert!((v["gamma"].as_f64().unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn design_prints_certificate() {
    let out = qsp(&["design", "--preset", "blowup-demo"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out.stdout);
    assert_eq!(v["q"], 4.0);
    assert!(v["lambda_mq0"].as_f64().unwrap() < 0.0);
    let out = qsp(&["design", "--coeff", "shift(1,-1)"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(qsp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qsp(&["simulate", "--preset", "nope"]).status.code(), Some(1));
    let out = qsp(&["classify", "--coeff", "shift(1,-1)", "--set", "problem.mass=-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mass"));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[grid]\nn = 100\ncells = 3\n").unwrap();
    let out = qsp(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cells"));
}

#[test]
fn blowup_demo_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(dir.path(), &["--preset", "blowup-demo"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,dt,f_min,f_max,u_max,mass_err,L1,m_q,sigma,slack_corollary,slack_gex5,slack_gex6,slack_moment_ode,slack_prandtl"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 14));
    assert_eq!(rows[0][12], "");
    assert!(rows.iter().all(|r| r[13].is_empty()));
    let t: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(t.windows(2).all(|w| w[0] < w[1]));
    let last_fmin: f64 = rows.last().unwrap()[2].parse().unwrap();
    assert!(last_fmin < 1e-6);
    let s = json(&fs::read(dir.path().join("summary.json")).unwrap());
    assert_eq!(s["verdict"], "blowup");
    assert!(s["blowup_time"].as_f64().unwrap().is_finite());
    let checks = s["checks"].as_array().unwrap();
    let moment = checks.iter().find(|c| c["name"] == "moment_decreasing").unwrap();
    assert_eq!(moment["passed"], true);
    for c in checks {
        assert_eq!(c["passed"].as_bool().unwrap(), c["first_violation"].is_null());
    }
}

#[test]
fn stationary_run_keeps_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(
        dir.path(),
        &["--coeff", "shift(1,-1)", "--set", "initial.kind=\"constant\"", "--t-max", "1", "--grid", "100"],
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let l1: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(6).unwrap().parse().unwrap()).collect();
    assert!(l1.len() > 2);
    assert!(l1.iter().all(|v| (v - l1[0]).abs() <= 1e-10));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = simulate(d.path(), &["--preset", "global-demo", "--t-max", "0.5"]);
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["series.csv", "summary.json", "f_final.csv"] {
        let (x, y) = (fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn sweep_lists_every_child() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsp(&[
        "sweep",
        "--preset",
        "global-demo",
        "--t-max",
        "0.1",
        "--set",
        "coefficient.spec=shift(1,-1),const(1)",
        "--set",
        "problem.mass=1,-1",
        "--jobs",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let m = json(&fs::read(dir.path().join("manifest.json")).unwrap());
    let children = m["children"].as_array().unwrap();
    assert_eq!(children.len(), 4);
    for (i, c) in children.iter().enumerate() {
        assert_eq!(c["index"], i);
        let bad_mass = c["overrides"]["problem.mass"] == -1;
        assert_eq!(c["error"].is_null(), !bad_mass);
        if !bad_mass {
            assert_eq!(c["verdict"], "global-so-far");
            assert!(dir.path().join(c["dir"].as_str().unwrap()).join("summary.json").exists());
        }
    }
}

#[test]
fn validate_passes() {
    let out = qsp(&["validate"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.lines().count() >= 10);
}
