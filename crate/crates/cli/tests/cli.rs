use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn macest(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_macest"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Three well-separated 2-D clusters on a deterministic grid-like layout.
fn write_clusters(path: &Path, n: usize, offset: usize) {
    let mut text = String::from("x,y,label\n");
    for i in 0..n {
        let c = i % 3;
        let t = (i + offset) as f64;
        let x = 4.0 * c as f64 + (t * 0.7137).sin();
        let y = (t * 1.3171).cos();
        text.push_str(&format!("{x},{y},{c}\n"));
    }
    fs::write(path, text).unwrap();
}

fn fitted(dir: &Path) {
    write_clusters(&dir.join("train.csv"), 600, 0);
    write_clusters(&dir.join("query.csv"), 45, 10_000);
    let o = macest(
        &["fit", "--train", "train.csv", "--out", "m.mace", "--backend", "exact"],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn fit_then_predict_writes_one_row_per_query() {
    let tmp = TempDir::new().unwrap();
    fitted(tmp.path());
    let o = macest(&["predict", "--model", "m.mace", "--input", "query.csv"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "row,prediction,confidence,p_0,p_1,p_2,epistemic,aleatoric,disagreement"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 45);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 9);
        let conf: f64 = cells[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&conf));
    }
}

#[test]
fn predict_to_file_matches_stdout() {
    let tmp = TempDir::new().unwrap();
    fitted(tmp.path());
    let a = macest(&["predict", "--model", "m.mace", "--input", "query.csv"], tmp.path());
    let b = macest(
        &["predict", "--model", "m.mace", "--input", "query.csv", "--out", "p.csv"],
        tmp.path(),
    );
    assert!(b.status.success());
    assert_eq!(fs::read(tmp.path().join("p.csv")).unwrap(), a.stdout);
}

#[test]
fn eval_reports_requested_metrics() {
    let tmp = TempDir::new().unwrap();
    fitted(tmp.path());
    let o = macest(
        &[
            "eval",
            "--model",
            "m.mace",
            "--input",
            "query.csv",
            "--metrics",
            "ece,brier",
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = out.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["accuracy", "ece", "brier"]);
}

#[test]
fn trust_and_anomaly_emit_rows() {
    let tmp = TempDir::new().unwrap();
    fitted(tmp.path());
    let t = macest(
        &["trust", "--model", "m.mace", "--input", "query.csv", "--k", "3"],
        tmp.path(),
    );
    assert!(t.status.success(), "{}", stderr(&t));
    assert_eq!(String::from_utf8(t.stdout).unwrap().lines().count(), 46);

    let mut far = String::from("x,y\n");
    far.push_str("500,500\n4,0\n");
    fs::write(tmp.path().join("far.csv"), far).unwrap();
    let a = macest(&["anomaly", "--model", "m.mace", "--input", "far.csv"], tmp.path());
    assert!(a.status.success(), "{}", stderr(&a));
    let out = String::from_utf8(a.stdout).unwrap();
    let flags: Vec<&str> = out.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(flags, ["true", "false"]);
}

#[test]
fn external_predictions_are_used_without_a_stored_predictor() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write_clusters(&dir.join("train.csv"), 600, 0);
    let text = fs::read_to_string(dir.join("train.csv")).unwrap();
    let mut preds = String::from("prediction\n");
    for line in text.lines().skip(1) {
        preds.push_str(line.rsplit(',').next().unwrap());
        preds.push('\n');
    }
    fs::write(dir.join("preds.csv"), &preds).unwrap();
    let o = macest(
        &[
            "fit",
            "--train",
            "train.csv",
            "--predictions",
            "preds.csv",
            "--out",
            "m.mace",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let o = macest(&["predict", "--model", "m.mace", "--input", "train.csv"], dir);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--predictions"));

    let o = macest(
        &[
            "predict",
            "--model",
            "m.mace",
            "--input",
            "train.csv",
            "--predictions",
            "preds.csv",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 601);
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = macest(&["fit", "--train", "train.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--out"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let o = macest(&["predict", "--frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_and_version_succeed() {
    let tmp = TempDir::new().unwrap();
    let h = macest(&["--help"], tmp.path());
    assert_eq!(h.status.code(), Some(0));
    assert!(String::from_utf8(h.stdout)
        .unwrap()
        .contains("row,prediction,confidence"));
    assert_eq!(macest(&["--version"], tmp.path()).status.code(), Some(0));
}

#[test]
fn malformed_data_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.csv"), "x,label\n1.0,0\nnot-a-number,1\n").unwrap();
    let o = macest(&["fit", "--train", "bad.csv", "--out", "m.mace"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not-a-number"));
}

#[test]
fn missing_file_and_bad_model_are_data_errors() {
    let tmp = TempDir::new().unwrap();
    let o = macest(&["fit", "--train", "absent.csv", "--out", "m.mace"], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    write_clusters(&tmp.path().join("query.csv"), 9, 0);
    fs::write(tmp.path().join("junk.mace"), b"definitely not a model").unwrap();
    let o = macest(&["predict", "--model", "junk.mace", "--input", "query.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not a MACEst model"));
}

#[test]
fn experiment_drift_writes_report_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = r#"{
        "dataset": {"kind": "blobs", "n_per_class": 150, "classes": 3, "dim": 4, "separation": 3.0, "seed": 3},
        "methods": ["macest", "platt"],
        "noise_schedule": [0.0, 1.0, 2.0],
        "noise_samples": 200
    }"#;
    fs::write(tmp.path().join("c.json"), cfg).unwrap();
    let o = macest(
        &["experiment", "drift", "--config", "c.json", "--out", "out"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("out");
    for f in ["report.json", "drift.csv", "drift.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(out.join("drift.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "sd,accuracy,macest,platt");
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn experiment_rejects_unknown_config_fields() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"folds": 3, "colour": "blue"}"#).unwrap();
    let o = macest(
        &["experiment", "aleatoric", "--config", "c.json", "--out", "out"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}
