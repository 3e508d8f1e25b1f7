//! End-to-end tests driving the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn omkl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omkl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn gen_data(dir: &Path, samples: usize, classes: usize) -> Vec<PathBuf> {
    let out = omkl(
        &[
            "gen-synthetic",
            "--out",
            "data",
            "--seed",
            "5",
            "--samples",
            &samples.to_string(),
            "--classes",
            &classes.to_string(),
            "--dims",
            "3,4",
            "--strengths",
            "1.8,1.8",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    vec![
        dir.join("data/view0.csv"),
        dir.join("data/view1.csv"),
        dir.join("data/labels.csv"),
    ]
}

fn write_config(dir: &Path, method: &str, extra: &str) -> PathBuf {
    let config = format!(
        r#"{{
  "schema_version": 1,
  "view_paths": ["data/view0.csv", "data/view1.csv"],
  "label_path": "data/labels.csv",
  "method": "{method}",
  "search": {{
    "svm_costs": [5.0],
    "svm_sigmas": [0.05],
    "deep_sigmas": [0.05],
    "deep_components": [3],
    "deep_epochs": [15],
    "deep_dropouts": [0.0],
    "kind": "grid",
    "random_draws": 20,
    "folds": 3,
    "seed": 0
  }},
  "options": {{
    "statis_normalize": true,
    "mkl": {{"tol": 1e-4, "max_iters": 200, "backtrack": 0.5, "initial_step": 1.0, "svm_tol": 1e-4}},
    "deep_branch_sizes": [6, 4],
    "deep_head_hidden": 4,
    "deep_fusion": "weighted_sum",
    "deep_learning_rate": 0.001,
    "deep_batch_size": 8
  }},
  "seeds": [0, 1]{extra}
}}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn gen_synthetic_is_deterministic_with_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 40, 2);
    let view0 = std::fs::read_to_string(dir.path().join("data/view0.csv")).unwrap();
    assert_eq!(view0.lines().count(), 41);
    assert!(view0.starts_with("sample_id,"));
    let labels = std::fs::read_to_string(dir.path().join("data/labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 41);

    let dir2 = tempfile::tempdir().unwrap();
    gen_data(dir2.path(), 40, 2);
    let again = std::fs::read_to_string(dir2.path().join("data/view0.csv")).unwrap();
    assert_eq!(view0, again);
}

#[test]
fn run_writes_deterministic_reports() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 36, 2);
    write_config(dir.path(), "svm_naive", "");
    let out = omkl(&["run", "--config", "config.json", "--out", "out1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("out1/report.json")).unwrap();
    assert!(report.contains("\"acc\""));
    assert!(report.contains("per_seed"));
    let table = std::fs::read_to_string(dir.path().join("out1/report.txt")).unwrap();
    assert!(table.contains("±"));

    let out = omkl(&["run", "--config", "config.json", "--out", "out2"], dir.path());
    assert!(out.status.success());
    let again = std::fs::read_to_string(dir.path().join("out2/report.json")).unwrap();
    assert_eq!(report, again);
}

#[test]
fn seed_list_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 36, 2);
    write_config(dir.path(), "svm_naive", "");
    let out = omkl(
        &["run", "--config", "config.json", "--out", "o", "--seed-list", "2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("o/report.json")).unwrap();
    assert!(report.contains("\"seed\": 2"));
    assert!(!report.contains("\"seed\": 0"));
}

#[test]
fn unknown_method_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 36, 2);
    write_config(dir.path(), "definitely_not_a_method", "");
    let out = omkl(&["run", "--config", "config.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("method") || stderr.contains("variant"), "{stderr}");
}

#[test]
fn missing_view_file_exits_with_data_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 36, 2);
    write_config(dir.path(), "svm_naive", "");
    let cfg = std::fs::read_to_string(dir.path().join("config.json")).unwrap();
    std::fs::write(
        dir.path().join("config.json"),
        cfg.replace("data/view1.csv", "data/absent.csv"),
    )
    .unwrap();
    let out = omkl(&["run", "--config", "config.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data/absent.csv"));
}

#[test]
fn train_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 36, 2);
    write_config(
        dir.path(),
        "svm_naive",
        ",\n  \"point\": {\"kind\": \"svm\", \"cost\": 5.0, \"sigma\": 0.05}",
    );
    let out = omkl(&["train", "--config", "config.json", "--out", "m"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("m/model.json").exists());

    let out = omkl(
        &[
            "predict",
            "--model",
            "m/model.json",
            "--views",
            "data/view0.csv",
            "data/view1.csv",
            "--out",
            "p1",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let preds = std::fs::read_to_string(dir.path().join("p1/predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 37);
    assert!(preds.starts_with("sample_id,predicted_label,score_class0,score_class1"));

    // Same model, same data: byte-identical predictions.
    let out = omkl(
        &[
            "predict",
            "--model",
            "m/model.json",
            "--views",
            "data/view0.csv",
            "data/view1.csv",
            "--out",
            "p2",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let again = std::fs::read_to_string(dir.path().join("p2/predictions.csv")).unwrap();
    assert_eq!(preds, again);
}

#[test]
fn predict_missing_view_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 36, 2);
    write_config(
        dir.path(),
        "svm_naive",
        ",\n  \"point\": {\"kind\": \"svm\", \"cost\": 5.0, \"sigma\": 0.05}",
    );
    let out = omkl(&["train", "--config", "config.json", "--out", "m"], dir.path());
    assert!(out.status.success());
    let out = omkl(
        &[
            "predict",
            "--model",
            "m/model.json",
            "--views",
            "data/view0.csv",
            "data/nope.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data/nope.csv"));
}

#[test]
fn interpret_deep_model_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 36, 2);
    write_config(
        dir.path(),
        "deep_mkl",
        ",\n  \"point\": {\"kind\": \"deep\", \"sigma\": 0.05, \"components\": 3, \"epochs\": 15, \"dropout\": 0.0}",
    );
    let out = omkl(&["train", "--config", "config.json", "--out", "m"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = omkl(
        &[
            "interpret",
            "--model",
            "m/model.json",
            "--views",
            "data/view0.csv",
            "data/view1.csv",
            "--out",
            "att",
            "--steps",
            "16",
            "--top-components",
            "2",
            "--top-features",
            "3,2",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let components = std::fs::read_to_string(dir.path().join("att/components.csv")).unwrap();
    assert_eq!(components.lines().count(), 1 + 2 * 2);
    let features = std::fs::read_to_string(dir.path().join("att/features.csv")).unwrap();
    assert_eq!(features.lines().count(), 1 + 3 + 2);
    assert!(dir.path().join("att/attribution.json").exists());
}

#[test]
fn interpret_rejects_svm_models() {
    let dir = tempfile::tempdir().unwrap();
    gen_data(dir.path(), 36, 2);
    write_config(
        dir.path(),
        "svm_naive",
        ",\n  \"point\": {\"kind\": \"svm\", \"cost\": 5.0, \"sigma\": 0.05}",
    );
    let out = omkl(&["train", "--config", "config.json", "--out", "m"], dir.path());
    assert!(out.status.success());
    let out = omkl(
        &[
            "interpret",
            "--model",
            "m/model.json",
            "--views",
            "data/view0.csv",
            "data/view1.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("deep"));
}

#[test]
fn generated_files_reload_and_multiclass_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = omkl(
        &[
            "gen-synthetic",
            "--out",
            "data",
            "--seed",
            "9",
            "--samples",
            "45",
            "--classes",
            "3",
            "--dims",
            "3,4",
            "--strengths",
            "2.0,2.0",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    write_config(dir.path(), "statis_umkl_svm", ",\n  \"train_fraction\": 0.7");
    let out = omkl(
        &["run", "--config", "config.json", "--out", "o", "--seed-list", "0"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("o/report.json")).unwrap();
    assert!(report.contains("f1_macro"));
}
