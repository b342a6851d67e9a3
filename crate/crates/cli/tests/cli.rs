use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mothscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mothscan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic dataset, one scene and a model trained on it.
fn trained(dir: &Path) -> std::path::PathBuf {
    let out = mothscan(&["synth", "--out", path(dir), "--patches", "100", "--scenes", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = dir.join("model.json");
    let out = mothscan(&["train", "--data", path(&dir.join("patches")), "--out", path(&model), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["converged"], Value::Bool(true));
    model
}

#[test]
fn dump_config_prints_defaults() {
    let out = mothscan(&["--dump-config"]);
    assert_eq!(out.status.code(), Some(0));
    let cfg = stdout_json(&out);
    assert_eq!(cfg["format_version"], 1);
    assert_eq!(cfg["hcs"]["bins"], 9);
}

#[test]
fn dumped_config_is_accepted_back() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cfg.json");
    std::fs::write(&file, mothscan(&["--dump-config"]).stdout).unwrap();
    let out = mothscan(&["--config", path(&file), "--dump-config"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = mothscan(&["detect", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn missing_model_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("blank.png");
    mothscan_core::GrayImage::filled(40, 30, 0.8).save_png(&img).unwrap();
    let model = dir.path().join("absent-model.json");
    let out = mothscan(&["detect", "--image", path(&img), "--model", path(&model)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent-model.json"));
}

#[test]
fn bad_config_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cfg.json");
    std::fs::write(&file, r#"{"format_version": 7}"#).unwrap();
    let out = mothscan(&["--config", path(&file), "--dump-config"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn one_fold_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mothscan(&["evaluate", "--data", path(dir.path()), "--folds", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_train_detect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained(dir.path());

    let blank = dir.path().join("blank.png");
    mothscan_core::GrayImage::filled(160, 120, 0.85).save_png(&blank).unwrap();
    let out = mothscan(&["detect", "--image", path(&blank), "--model", path(&model)]);
    assert_eq!(out.status.code(), Some(0));
    let counts = &stdout_json(&out)["counts"];
    for key in ["moths", "other_insects", "noise", "touching_groups_split"] {
        assert_eq!(counts[key], 0, "{key}");
    }

    let scene = dir.path().join("scenes/scene_00.png");
    let overlay = dir.path().join("overlay.png");
    let json = dir.path().join("report.json");
    let out = mothscan(&[
        "detect",
        "--image",
        path(&scene),
        "--model",
        path(&model),
        "--overlay",
        path(&overlay),
        "--json",
        path(&json),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("scenes/scene_00.json")).unwrap()).unwrap();
    assert_eq!(report["counts"]["moths"], truth["moths"]);
    assert_eq!(report["counts"]["other_insects"], truth["others"]);
    assert!(report["counts"]["noise"].as_u64().unwrap() >= 8);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(written, report);
    assert!(overlay.is_file());

    // same inputs, same bytes
    let again = mothscan(&["detect", "--image", path(&scene), "--model", path(&model)]);
    assert_eq!(again.stdout, out.stdout);
}

#[test]
fn evaluate_prints_fold_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = mothscan(&["synth", "--out", path(dir.path()), "--patches", "20", "--scenes", "0"]);
    assert!(out.status.success());
    let out = mothscan(&["evaluate", "--data", path(&dir.path().join("patches")), "--folds", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["per_fold"].as_array().unwrap().len(), 4);
    let n_test: u64 = report["n_test"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(n_test, 40);
    let mean = report["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean));
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn unconverged_training_exits_3_and_still_writes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = mothscan(&["synth", "--out", path(dir.path()), "--patches", "10", "--scenes", "0"]);
    assert!(out.status.success());
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"svm": {"c": 0.1, "kernel": {"degree": 6, "offset": 1.0}, "tolerance": 1e-3, "max_updates": 1}}"#).unwrap();
    let model = dir.path().join("m.json");
    let out = mothscan(&[
        "--config",
        path(&cfg),
        "train",
        "--data",
        path(&dir.path().join("patches")),
        "--out",
        path(&model),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.is_file());
}
