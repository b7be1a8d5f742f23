use std::fs;
use std::process::Command;

use serde_json::Value;
use sklab::experiment_harness::{
    emit, read_csv, run_experiment, sidecar_path, ExperimentConfig, Model, OutputFormat, OutputSpec, SCHEMA_VERSION,
};
use sklab::rmt_core::SpectralMode;
use sklab::theory_engine::{GForm, RadialSpec, SpikeSpec};

fn ball_config(trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        model: Model::Ball,
        n: 80,
        trials,
        master_seed: 2024,
        beta: 1.0,
        spike: SpikeSpec::monomial(1.0, 1).unwrap(),
        radial: Some(RadialSpec::tap(1.0).unwrap()),
        radius_domain: None,
        outputs: None,
        parallelism: 2,
        spectral_mode: SpectralMode::Invariance,
        g_form: GForm::Full,
    }
}

#[test]
fn csv_and_json_agree_on_golden_campaign() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&ball_config(4)).unwrap();
    let csv_path = dir.path().join("golden.csv");
    let json_path = dir.path().join("golden.json");
    emit(&out, &OutputSpec { path: csv_path.clone(), format: OutputFormat::Csv }).unwrap();
    emit(&out, &OutputSpec { path: json_path.clone(), format: OutputFormat::Json }).unwrap();

    let from_csv = read_csv(&csv_path).unwrap();
    let doc: Value = serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    let from_json: Vec<sklab::experiment_harness::TrialRecord> =
        serde_json::from_value(doc["records"].clone()).unwrap();
    assert_eq!(from_csv, from_json);
    assert_eq!(from_csv, out.records);
    assert!(from_csv.iter().all(|r| r.r_star.is_some()));

    let side: Value = serde_json::from_str(&fs::read_to_string(sidecar_path(&csv_path)).unwrap()).unwrap();
    assert_eq!(side["theory"], doc["theory"]);
    assert_eq!(side["summary"], doc["summary"]);
}

#[test]
fn configured_output_is_written_and_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ball_config(3);
    let strip = |text: String| -> Vec<String> {
        text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    let mut runs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        cfg.outputs = Some(OutputSpec { path: dir.path().join(name), format: OutputFormat::Csv });
        run_experiment(&cfg).unwrap();
        runs.push(strip(fs::read_to_string(dir.path().join(name)).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0].len(), 4);
}

#[test]
fn unwritable_path_is_an_error() {
    let mut cfg = ball_config(1);
    cfg.outputs = Some(OutputSpec { path: "/nonexistent-dir/x.csv".into(), format: OutputFormat::Csv });
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn boundary_maximiser_leaves_residual_empty() {
    // k = 3 with small h: α̂ = 0, so the fluctuation theory does not apply
    let mut cfg = ball_config(2);
    cfg.model = Model::Sphere;
    cfg.radial = None;
    cfg.spike = SpikeSpec::monomial(0.5, 3).unwrap();
    let out = run_experiment(&cfg).unwrap();
    assert!(out.theory.residual_unavailable.is_some());
    assert!(out.records.iter().all(|r| r.valid && r.residual.is_none()));
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    let cfg = ball_config(2);
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let back = ExperimentConfig::from_json_file(&path).unwrap();
    assert_eq!(serde_json::to_value(&back).unwrap(), serde_json::to_value(&cfg).unwrap());
}

fn sklab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sklab"))
}

#[test]
fn cli_verify_exit_code() {
    let status = sklab().args(["verify", "--suite", "crossref", "--quick"]).output().unwrap();
    assert!(status.status.success());
    let text = String::from_utf8(status.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2);
}

#[test]
fn cli_phase_and_theory() {
    let out = sklab()
        .args(["phase", "--k", "3", "--h-min", "1", "--h-max", "2", "--h-steps", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,h,beta,beta_c,beta_tilde_c,h_c,sphere_maximizer,ball_maximizer");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].ends_with("zero,zero"));

    let out = sklab().args(["theory", "--spike", "monomial:1:1", "--beta", "1", "--json"]).output().unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["leading"]["value"].as_f64().unwrap() - 3f64.sqrt()).abs() < 1e-12);
}

#[test]
fn cli_simulate_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let out = sklab()
        .args(["simulate", "--n", "40", "--trials", "2", "--seed", "9", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 3);
}

#[test]
fn cli_rejects_bad_spike() {
    let out = sklab().args(["theory", "--spike", "cubic", "--beta", "1"]).output().unwrap();
    assert!(!out.status.success());
}
