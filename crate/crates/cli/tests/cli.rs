use std::process::{Command, Output};

use serde_json::Value;

fn paqft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paqft")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

#[test]
fn weyl_check_passes() {
    let out = paqft(&["weyl-check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["command"], "weyl-check");
    let phase = r["results"].as_array().unwrap().iter().find(|c| c["name"] == "weyl_relation_phase").unwrap();
    assert!(phase["value"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn graphs_for_two_vertices() {
    let out = paqft(&["graphs", "--n", "2", "--cap", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let results = r["results"].as_array().unwrap();
    assert_eq!(results[0]["value"], 3.0);
    let syms: Vec<f64> = results.iter().filter(|c| c["name"].as_str().unwrap().starts_with("sym")).map(|c| c["value"].as_f64().unwrap()).collect();
    assert_eq!(syms, vec![1.0, 1.0, 2.0]);
}

#[test]
fn extend_reports_the_pole_per_gaussian() {
    let out = paqft(&["extend", "--dist", "abs_pow:-1", "--dim", "1", "--scheme", "ms"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    let poles: Vec<f64> = r["results"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["name"].as_str().unwrap().starts_with("pole_coefficient"))
        .map(|c| c["value"].as_f64().unwrap())
        .collect();
    // Gaussians are normalized to f(0) = 1
    assert_eq!(poles.len(), 3);
    for p in poles {
        assert!((p - 2.0).abs() < 1e-7);
    }
}

#[test]
fn reports_are_byte_stable() {
    let a = paqft(&["bracket-equiv", "--seed", "7"]);
    let b = paqft(&["bracket-equiv", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(a.stdout.ends_with(b"\n"));
    assert_eq!(report(&a)["seed"], 7);
}

#[test]
fn every_result_names_its_source() {
    let r = report(&paqft(&["causal-fact"]));
    for c in r["results"].as_array().unwrap() {
        assert!(!c["source"].as_str().unwrap().is_empty());
        assert!(c["contract"].is_string());
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"seed": 5, "mass": 1.3}"#).unwrap();
    let out_path = dir.path().join("report.json");
    let out = paqft(&["model-check", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(r["seed"], 9);
    assert_eq!(r["config"]["mass"], 1.3);
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"tol": -1.0}"#).unwrap();
    assert_eq!(paqft(&["model-check", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&cfg, r#"{"unknown": 1}"#).unwrap();
    assert_eq!(paqft(&["model-check", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(paqft(&["model-check", "--config", "/nonexistent/run.json"]).status.code(), Some(2));
    assert_eq!(paqft(&["smatrix", "--cap-hbar", "1", "--cap-lambda", "2"]).status.code(), Some(2));
    assert_eq!(paqft(&["extend", "--dist", "abs_pow:-1", "--scheme", "dimreg"]).status.code(), Some(2));
    assert_eq!(paqft(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn violated_contract_exits_one() {
    let out = paqft(&["model-check", "--tol", "1e-30"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["pass"], false);
}

#[test]
fn thread_cap_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_paqft")).arg("graphs").env("PAQFT_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_paqft")).arg("weyl-check").env("PAQFT_THREADS", "1").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, paqft(&["weyl-check"]).stdout);
}
