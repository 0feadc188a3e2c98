use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ldm_cvar::cli::cli_main;
use ldm_cvar::LayerAllocation;
use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldm-cvar")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn sample(dir: &Path, name: &str, model: &str, n: usize, seed: u64) -> String {
    let path = dir.join(name).to_str().unwrap().to_string();
    let out = bin(&["sample", "--model", model, "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", &path]);
    assert!(out.status.success());
    path
}

#[test]
fn bound_prints_a_report() {
    let v = json(&bin(&["bound", "--n", "1000", "--delta", "0.05", "--beta", "0.1", "--s", "10", "--power-db", "20"]));
    assert_eq!(v["n"], 1000);
    assert!((v["power"].as_f64().unwrap() - 100.0).abs() < 1e-9);
    assert!(v["bound_value"].as_f64().unwrap() > 0.0);
}

#[test]
fn baseline_matches_the_rayleigh_value() {
    let v = json(&bin(&["baseline", "--power-db", "20"]));
    assert!((v["expected_rate"].as_f64().unwrap() - 3.97659973760885).abs() < 1e-6);
}

#[test]
fn optimize_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample(dir.path(), "g.csv", r#"{"kind":"rayleigh","var":1.0}"#, 200, 4);
    let out = bin(&["optimize", "--m", "3", "--beta", "0.1", "--data", &data]);
    let alloc: LayerAllocation = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(alloc.layers(), 3);
    assert!((alloc.lambda.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let alloc_path = dir.path().join("a.json");
    fs::write(&alloc_path, &out.stdout).unwrap();
    let a = alloc_path.to_str().unwrap();
    let v = json(&bin(&["evaluate", "--alloc", a, "--data", &data, "--beta", "0.1"]));
    assert_eq!(v["oracle"]["oracle"], "empirical");
    assert_eq!(v["report"]["n_used"], 20);
    let v = json(&bin(&["evaluate", "--alloc", a, "--model", r#"{"kind":"rayleigh","var":1.0}"#, "--beta", "0.1"]));
    assert_eq!(v["oracle"]["oracle"], "analytic");
    let csv = bin(&["evaluate", "--alloc", a, "--data", &data, "--format", "csv"]);
    assert!(String::from_utf8(csv.stdout).unwrap().starts_with("mean_rate,outage_rate,cvar_rate,beta,n_used\n"));
}

#[test]
fn optimize_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample(dir.path(), "g.csv", r#"{"kind":"rician","nu":2.0,"var":1.0}"#, 100, 1);
    let trace = dir.path().join("t.csv");
    let out = bin(&["optimize", "--m", "2", "--beta", "0.2", "--data", &data, "--trace", trace.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(fs::read_to_string(trace).unwrap().starts_with("iter,objective\n"));
}

#[test]
fn meta_train_emits_an_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let a = sample(dir.path(), "a.csv", r#"{"kind":"rician","nu":3.0,"var":5.0}"#, 20, 1);
    let b = sample(dir.path(), "b.csv", r#"{"kind":"rician","nu":3.5,"var":5.0}"#, 20, 2);
    let cfg = dir.path().join("meta.json");
    fs::write(&cfg, r#"{"meta_iters": 20}"#).unwrap();
    let out = bin(&["meta-train", "--tasks", &a, &b, "--m", "3", "--beta", "0.2", "--seed", "9", "--config", cfg.to_str().unwrap()]);
    let alloc: LayerAllocation = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(alloc.layers(), 3);
}

#[test]
fn experiment_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fig3.json");
    fs::write(
        &cfg,
        r#"{"scenario":"fig3","sweep":{"variable":"m","values":[1,2]},"replications":2,"n":30,"seed":11,
            "optim":{"max_iters":200}}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = bin(&["experiment", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("sweep,mean,stderr,reps\n"));
    assert_eq!(text.lines().count(), 3);

    let o = bin(&["experiment", "--config", cfg.to_str().unwrap(), "--format", "json"]);
    let v = json(&o);
    assert_eq!(v["scenario"], "fig3");
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes() {
    assert_eq!(cli_main(["ldm-cvar", "--bogus"]), 2);
    assert_eq!(cli_main(["ldm-cvar", "frobnicate"]), 2);
    assert_eq!(cli_main(["ldm-cvar", "bound", "--n", "10", "--delta", "2"]), 2);
    assert_eq!(cli_main(["ldm-cvar", "experiment", "--config", "/nonexistent/spec.json"]), 2);
    assert_eq!(cli_main(["ldm-cvar", "baseline", "--model", r#"{"kind":"rayleigh","var":-1}"#]), 2);
    assert_eq!(cli_main(["ldm-cvar", "--help"]), 0);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"scenario":"fig5","sweep":{"variable":"m","values":[1]}}"#).unwrap();
    assert_eq!(cli_main(["ldm-cvar", "experiment", "--config", cfg.to_str().unwrap()]), 2);
}

#[test]
fn numerical_errors_map_to_three() {
    use ldm_cvar::cli::exit_code;
    use ldm_cvar::Error;
    assert_eq!(exit_code(&Error::Numerical("diverged".into())), 3);
    assert_eq!(exit_code(&Error::Config("bad".into())), 2);
    assert_eq!(exit_code(&Error::UnsupportedModel("mixture".into())), 2);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let spec: ldm_cvar::harness::ExperimentSpec =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        spec.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 6);
}
