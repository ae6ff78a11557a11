use std::fs;
use std::path::Path;

use chanlearn::cli::run_with;
use chanlearn::dataset;
use serde_json::{json, Value};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["chanlearn", "--quiet"];
    full.extend_from_slice(args);
    let code = run_with(full, &mut out, &mut err);
    Run { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate_classification(out: &Path) -> Run {
    run(&[
        "generate",
        "--task",
        "classification",
        "--per-class",
        "100",
        "--len",
        "10",
        "--r",
        "1",
        "--gen",
        "d1",
        "--seed",
        "7",
        "--out",
        p(out),
    ])
}

#[test]
fn generate_writes_the_requested_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let r = generate_classification(&dir.path().join("a"));
    assert_eq!(r.code, 0, "{}", r.stderr);
    let ds = dataset::load(&dir.path().join("a/dataset.chl")).unwrap();
    assert_eq!(ds.len(), 500);
    assert_eq!(ds.seq_len, 10);
    assert!(dir.path().join("a/resolved_config.json").exists());
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(generate_classification(&dir.path().join("a")).code, 0);
    assert_eq!(generate_classification(&dir.path().join("b")).code, 0);
    let a = fs::read(dir.path().join("a/dataset.chl")).unwrap();
    let b = fs::read(dir.path().join("b/dataset.chl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn resolved_config_reproduces_generation() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(generate_classification(&dir.path().join("a")).code, 0);
    let cfg = dir.path().join("a/resolved_config.json");
    let r = run(&["generate", "--config", p(&cfg), "--out", p(&dir.path().join("b"))]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(
        fs::read(dir.path().join("a/dataset.chl")).unwrap(),
        fs::read(dir.path().join("b/dataset.chl")).unwrap()
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let r = run(&["generate", "--task", "classification", "--gen", "d3", "--out", p(&out)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("d3"), "{}", r.stderr);
    let r = run(&["generate", "--task", "regression", "--mu", "0.5", "--out", p(&out)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("--mu"), "{}", r.stderr);
    assert_eq!(run(&["generate", "--bogus"]).code, 2);
    assert_eq!(run(&["--threads", "0", "generate", "--task", "regression", "--out", p(&out)]).code, 2);
}

#[test]
fn unknown_experiment_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["experiment", "nonsense", "--out", p(dir.path())]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("classify-sweep") && r.stderr.contains("forecast-det"), "{}", r.stderr);
}

#[test]
fn forest_rejects_regression_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("reg");
    assert_eq!(run(&["generate", "--task", "regression", "--count", "50", "--out", p(&data)]).code, 0);
    let r =
        run(&["train", "--data", p(&data.join("dataset.chl")), "--model", "forest", "--out", p(&dir.path().join("m"))]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("forest supports classification only"), "{}", r.stderr);
}

#[test]
fn missing_files_report_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.chl");
    let r = run(&["train", "--data", p(&missing), "--model", "ffnn", "--out", p(&dir.path().join("m"))]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("nowhere.chl"), "{}", r.stderr);
}

#[test]
fn training_twice_gives_identical_history() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(generate_classification(&dir.path().join("d")).code, 0);
    let data = dir.path().join("d/dataset.chl");
    for m in ["m1", "m2"] {
        let r = run(&[
            "train",
            "--data",
            p(&data),
            "--model",
            "rnn",
            "--epochs",
            "2",
            "--batch-size",
            "50",
            "--seed",
            "1",
            "--out",
            p(&dir.path().join(m)),
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    assert!(dir.path().join("m1/manifest.json").exists());
    let a = fs::read(dir.path().join("m1/history.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("m2/history.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 3);

    let r = run(&["eval", "--model", p(&dir.path().join("m1")), "--data", p(&data)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let acc = v["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(v["confusion"].as_array().unwrap().len(), 5);
}

#[test]
fn eval_matches_the_last_training_loss() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("reg");
    assert_eq!(run(&["generate", "--task", "regression", "--count", "300", "--seed", "2", "--out", p(&data)]).code, 0);
    let file = data.join("dataset.chl");
    let model = dir.path().join("m");
    let r = run(&[
        "train",
        "--data",
        p(&file),
        "--test-data",
        p(&file),
        "--model",
        "ffnn",
        "--epochs",
        "20",
        "--out",
        p(&model),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let history = fs::read_to_string(model.join("history.csv")).unwrap();
    let header: Vec<&str> = history.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "train_eval_loss").unwrap();
    let last: f64 = history.lines().last().unwrap().split(',').nth(col).unwrap().parse().unwrap();
    let r = run(&["eval", "--model", p(&model), "--data", p(&file)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert!((v["mse"].as_f64().unwrap() - last).abs() <= 1e-12);
}

#[test]
fn forest_models_round_trip_through_eval() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(generate_classification(&dir.path().join("d")).code, 0);
    let data = dir.path().join("d/dataset.chl");
    let model = dir.path().join("f");
    let r = run(&["train", "--data", p(&data), "--model", "forest", "--n-estimators", "10", "--out", p(&model)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let r = run(&["eval", "--model", p(&model), "--data", p(&data)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert!(v["accuracy"].as_f64().unwrap() > 0.5);
}

fn write_config(dir: &Path, value: Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, value.to_string()).unwrap();
    path
}

#[test]
fn regression_experiment_reports_final_mse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({
            "experiment": "regression",
            "count": 500,
            "r": 1.0,
            "schedule": { "epochs": 5, "batch_size": 100, "learning_rate": 1e-3 },
            "tiers": [1000],
            "tier_tolerance": 0.1,
            "traces": 2
        }),
    );
    let out = dir.path().join("run");
    let r = run(&["experiment", "regression", "--config", p(&cfg), "--seed", "3", "--out", p(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["metrics"]["final_test_mse"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["master_seed"], 3);
    assert!(out.join("regression_history.csv").exists());
    assert!(out.join("timing.json").exists());

    // rerun from the resolved config
    let again = dir.path().join("again");
    let r = run(&["experiment", "--config", p(&out.join("resolved_config.json")), "--out", p(&again)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for f in ["report.json", "regression_history.csv", "regression_traces.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn confusion_experiment_writes_square_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({
            "experiment": "confusion",
            "generations": ["d1"],
            "r": 1.0,
            "seq_len": 10,
            "per_class": 20,
            "model": "rnn",
            "schedule": { "epochs": 2, "batch_size": 50, "learning_rate": 1e-3 },
            "n_estimators": 10
        }),
    );
    let out = dir.path().join("run");
    let r = run(&["experiment", "confusion", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = fs::read_to_string(out.join("confusion_d1.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 6, "{csv}");
    assert!(rows.iter().all(|l| l.split(',').count() == 6), "{csv}");
}

#[test]
fn seed_falls_back_to_the_environment() {
    // the only test that touches CHANLEARN_SEED
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("CHANLEARN_SEED", "41");
    let r = run(&["generate", "--task", "regression", "--count", "5", "--out", p(&dir.path().join("a"))]);
    std::env::remove_var("CHANLEARN_SEED");
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(dataset::load(&dir.path().join("a/dataset.chl")).unwrap().master_seed, 41);
}
