use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vdmfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vdmfg")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_writes_csv_sidecar_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.csv");
    let o = vdmfg(&["solve", "--epsilon", "0.1", "--potential", "sine", "--c", "0.3", "--n", "128", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("x,u,m\n") && !text.contains('\r'));
    assert_eq!(text.lines().count(), 129);
    let side = json(&dir.path().join("sol.json"));
    for k in ["epsilon", "residual_sup", "iters", "mass", "min_m", "eps_u_min", "eps_u_max"] {
        assert!(side.get(k).is_some(), "missing {k}");
    }
    assert!((side["mass"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!(side["min_m"].as_f64().unwrap() >= 0.4 - 1e-3);
    let meta = json(&dir.path().join("meta.json"));
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config"]["n"], 128);
    assert_eq!(meta["config"]["regularization"]["sigma"], 0.0);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        assert_eq!(code(&vdmfg(&["solve", "--epsilon", "0.05", "--n", "96", "--out", s(p)])), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(dir.path().join("a.json")).unwrap(), fs::read(dir.path().join("b.json")).unwrap());
}

#[test]
fn degenerate_unregularized_solve_fails_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exdp.csv");
    let o = vdmfg(&["solve", "--epsilon", "0.1", "--potential", "cos2pi", "--n", "128", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stalled"));
    assert!(out.exists());
    let side = json(&dir.path().join("exdp.json"));
    assert_eq!(side["failed"], true);
    // the same model with regularization converges
    let o = vdmfg(&[
        "solve", "--epsilon", "0.1", "--potential", "cos2pi", "--sigma", "0.05", "--delta", "0.05", "--n", "128", "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(code(&vdmfg(&["solve", "--epsilon", "-1", "--out", s(&out)])), 2);
    assert_eq!(code(&vdmfg(&["solve", "--epsilon", "0.1", "--frobnicate", "--out", s(&out)])), 2);
    assert_eq!(code(&vdmfg(&["solve", "--epsilon", "0.1", "--config", "/nonexistent.json", "--out", s(&out)])), 2);
    assert_eq!(code(&vdmfg(&["select", "--eps-ladder", "0.1,0.2", "--out", s(dir.path())])), 2);
    assert_eq!(code(&vdmfg(&["nonsense"])), 2);
    assert_eq!(code(&vdmfg(&["--version"])), 0);
}

#[test]
fn flag_beats_file_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"n": 64, "coupling": {"kappa": 1.0, "alpha": 2.0}, "potential": {"kind": "sine", "c": 0.2}, "regularization": {"sigma": 0.0, "delta": 0.0}}"#,
    )
    .unwrap();
    let out = dir.path().join("sol.csv");
    let o = vdmfg(&["solve", "--epsilon", "0.1", "--config", s(&cfg), "--n", "80", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 81);
    let meta = json(&dir.path().join("meta.json"));
    assert_eq!(meta["config"]["n"], 80);
    assert_eq!(meta["config"]["coupling"]["alpha"], 2.0);
    assert_eq!(meta["config"]["overrides"], serde_json::json!(["n"]));
}

#[test]
fn example_writes_oracles() {
    let dir = tempfile::tempdir().unwrap();
    let o = vdmfg(&["example", "exlp", "--n", "2048", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    assert_eq!(header(&dir.path().join("m.csv")), "x,m");
    for label in ["tilde", "hat", "zero"] {
        assert_eq!(header(&dir.path().join(format!("candidate_{label}.csv"))), "x,u_x,u");
    }
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["minimizer"], "tilde");
    assert!(dir.path().join("meta.json").exists());

    let bbb = dir.path().join("bbb");
    assert_eq!(code(&vdmfg(&["example", "bbb", "--n", "256", "--out", s(&bbb)])), 0);
    assert!(bbb.join("candidate_hat.csv").exists() && bbb.join("candidate_tilde.csv").exists());
}

#[test]
fn select_writes_sweep_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = vdmfg(&["select", "--model", "exdp", "--n", "128", "--eps-ladder", "0.2,0.1", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        header(&dir.path().join("sweep.csv")),
        "eps,sigma,delta,Hbar_est,F_value,mass,min_m,holonomy_max,action_gap,coupling_gap,status"
    );
    let v = json(&dir.path().join("verdict.json"));
    assert_eq!(v["oracle_minimizer"], "tilde");
    assert!(v["nearest"].is_string());
    assert!(v["criterion_holds"].is_boolean());
    assert_eq!(json(&dir.path().join("meta.json"))["config"]["model"], "exdp");
}

#[test]
fn sweep_then_corrector() {
    let dir = tempfile::tempdir().unwrap();
    let sw = dir.path().join("sweep");
    assert_eq!(code(&vdmfg(&["sweep", "--n", "128", "--out", s(&sw)])), 0);
    assert!(sw.join("rung_3.csv").exists() && sw.join("base.csv").exists());
    let out = dir.path().join("corr/corr.csv");
    let o = vdmfg(&["corrector", "--base", s(&sw.join("base.csv")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out), "x,v,theta");
    let c = json(&dir.path().join("corr/corr.json"));
    assert!(c["lambda"].is_number() && c["route_agreement"].is_object());
    assert!(c["slopes"]["e_u"].as_f64().unwrap() > 0.8);
    // a base on a different grid than --n is a usage error
    let o = vdmfg(&["corrector", "--base", s(&sw.join("base.csv")), "--n", "64", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_exit_code_tracks_checks() {
    let o = vdmfg(&["verify", "--n", "128"]);
    assert_eq!(code(&o), 0);
    let table = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(table.contains("PASS") && !table.contains("FAIL"));
    let o = vdmfg(&["verify", "--n", "128", "--potential", "cos2pi"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
