use std::fs;

use macest::dataset::{save_csv, split_four};
use macest::harness::{
    emit_plots, emit_report, run_aleatoric, run_drift, run_ood, DatasetSource, Pipeline, Report, ReportDocument,
    HISTOGRAM_BINS,
};
use macest::metrics::Metric;
use macest::{ExperimentConfig, Method};
use tempfile::TempDir;

fn blobs(n_per_class: usize, separation: f64) -> DatasetSource {
    DatasetSource::Blobs {
        n_per_class,
        classes: 3,
        dim: 4,
        separation,
        seed: 11,
    }
}

fn small() -> ExperimentConfig {
    ExperimentConfig {
        dataset: blobs(150, 3.0),
        folds: 3,
        noise_samples: 150,
        noise_schedule: vec![0.0, 1.0, 2.0],
        ..ExperimentConfig::default()
    }
}

#[test]
fn well_separated_blobs_calibrate_every_method() {
    let cfg = ExperimentConfig {
        dataset: blobs(300, 4.0),
        folds: 4,
        ..small()
    };
    let r = run_aleatoric(&cfg).unwrap();
    assert!(r.skipped_folds.is_empty());
    let macest = r.method(Method::Macest).unwrap();
    for m in &r.methods {
        let ece = m.metrics["ece"];
        assert!(ece.mean < 0.1, "{} ece {}", m.method, ece.mean);
        if m.method.is_baseline() {
            assert!(ece.overlaps(&macest.metrics["ece"]), "{} does not overlap", m.method);
        }
    }
}

#[test]
fn single_method_report_contains_only_that_method() {
    let cfg = ExperimentConfig {
        methods: vec![Method::Isotonic],
        ..small()
    };
    let r = run_aleatoric(&cfg).unwrap();
    assert_eq!(r.methods.len(), 1);
    assert_eq!(r.methods[0].method, Method::Isotonic);
    let doc = ReportDocument::new(&Report::Aleatoric(r), &cfg);
    let names: Vec<&str> = doc.methods.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, ["isotonic"]);
}

#[test]
fn ten_folds_feed_each_error_bar() {
    let cfg = ExperimentConfig {
        folds: 10,
        methods: vec![Method::Macest, Method::Platt],
        metrics: vec![Metric::Ece],
        dataset: blobs(200, 3.0),
        ..small()
    };
    let r = run_aleatoric(&cfg).unwrap();
    assert_eq!(r.folds, 10);
    assert_eq!(r.fold_accuracy.len(), 10);
    for m in &r.methods {
        assert_eq!(m.per_fold["ece"].len(), 10);
    }
    assert_eq!(r.rows_evaluated, 600);
}

#[test]
fn zero_noise_level_matches_the_unperturbed_pipeline() {
    let cfg = small();
    let r = run_drift(&cfg).unwrap();
    assert_eq!(r.levels[0].sd, 0.0);

    let d = cfg.dataset.load().unwrap();
    let split = split_four(&d, cfg.split_fractions, cfg.seed).unwrap();
    let p = Pipeline::fit(&cfg, &split.predictor_train, &split.graph, &split.calibration).unwrap();
    let z = p.embedding.apply(split.test.features()).unwrap();
    let pred = p
        .predict_embedded(z.view())
        .unwrap()
        .with_truth(split.test.labels())
        .unwrap();
    assert_eq!(r.levels[0].accuracy, pred.accuracy().unwrap());
    for (i, &m) in cfg.methods.iter().enumerate() {
        let c = p.confidences(m, z.view(), &pred).unwrap();
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        assert!((r.levels[0].mean_confidence[i] - mean).abs() < 1e-12, "{m}");
    }
}

#[test]
fn extreme_drift_drives_accuracy_to_chance() {
    let cfg = ExperimentConfig {
        noise_schedule: vec![0.0, 200.0],
        dataset: blobs(400, 3.0),
        ..small()
    };
    let r = run_drift(&cfg).unwrap();
    let acc = r.levels[1].accuracy;
    assert!((acc - 1.0 / 3.0).abs() <= 0.1, "accuracy {acc}");
    assert!(r.levels[0].accuracy > 0.8);
}

#[test]
fn drift_csv_follows_schedule_and_method_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = ExperimentConfig {
        methods: vec![Method::Temperature, Method::Macest, Method::Platt],
        ..small()
    };
    let report = Report::Drift(run_drift(&cfg).unwrap());
    emit_report(&report, &cfg, tmp.path()).unwrap();
    let csv = fs::read_to_string(tmp.path().join("drift.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sd,accuracy,temperature,macest,platt");
    assert_eq!(lines.len(), 1 + cfg.noise_schedule.len());
    for (line, sd) in lines[1..].iter().zip(&cfg.noise_schedule) {
        assert_eq!(line.split(',').next().unwrap().parse::<f64>().unwrap(), *sd);
    }
    let written = emit_plots(&report, tmp.path()).unwrap();
    let svg = fs::read_to_string(&written[0]).unwrap();
    assert_eq!(svg.matches("class=\"series\"").count(), 1 + cfg.methods.len());
}

#[test]
fn reliability_svg_has_one_bar_per_occupied_bin() {
    let tmp = TempDir::new().unwrap();
    let cfg = small();
    let r = run_aleatoric(&cfg).unwrap();
    let report = Report::Aleatoric(r.clone());
    let files = emit_plots(&report, tmp.path()).unwrap();
    assert_eq!(files.len(), cfg.methods.len());
    for m in &r.methods {
        let svg = fs::read_to_string(tmp.path().join(format!("reliability_{}.svg", m.method))).unwrap();
        let occupied = m.reliability.iter().filter(|b| b.count > 0).count();
        assert_eq!(svg.matches("<rect class=\"bar\"").count(), occupied);
        assert!(occupied > 0);
    }
}

#[test]
fn report_json_round_trips() {
    let cfg = small();
    for report in [
        Report::Aleatoric(run_aleatoric(&cfg).unwrap()),
        Report::Drift(run_drift(&cfg).unwrap()),
        Report::Ood(run_ood(&cfg).unwrap()),
    ] {
        let doc = ReportDocument::new(&report, &cfg);
        let text = doc.to_json().unwrap();
        let back = ReportDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.details, report);
        assert_eq!(back.to_json().unwrap(), text);
    }
}

#[test]
fn report_json_has_stable_top_level_keys() {
    let tmp = TempDir::new().unwrap();
    let cfg = small();
    let report = Report::Aleatoric(run_aleatoric(&cfg).unwrap());
    emit_report(&report, &cfg, tmp.path()).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    for key in ["schema_version", "config_echo", "methods", "tables"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let ece = &v["methods"][0]["metrics"]["ece"];
    assert!(ece["mean"].is_number() && ece["half_width"].is_number());
    let bin = &v["methods"][0]["reliability"][0];
    for key in ["conf", "acc", "count"] {
        assert!(bin.get(key).is_some(), "{key}");
    }
}

#[test]
fn ood_report_tables_are_complete() {
    let tmp = TempDir::new().unwrap();
    let cfg = small();
    let r = run_ood(&cfg).unwrap();
    assert_eq!(r.ks.len(), 3);
    assert_eq!(r.noise_rows, cfg.noise_samples);
    for m in &r.methods {
        assert_eq!(m.histogram_in_sample.len(), HISTOGRAM_BINS);
        assert_eq!(m.histogram_in_sample.iter().sum::<usize>(), r.test_rows);
        assert_eq!(m.histogram_noise.iter().sum::<usize>(), r.noise_rows);
    }
    let report = Report::Ood(r);
    let mut files = emit_report(&report, &cfg, tmp.path()).unwrap();
    files.extend(emit_plots(&report, tmp.path()).unwrap());
    for name in [
        "report.json",
        "ood_summary.csv",
        "spearman.csv",
        "ks.csv",
        "anomaly.csv",
        "confidence_macest.svg",
    ] {
        assert!(files.contains(&tmp.path().join(name)), "{name}");
    }
    let doc: ReportDocument =
        ReportDocument::from_json(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(doc.tables.ks.len(), 3);
    assert!(doc.tables.ks.contains_key("macest_vs_platt"));
    assert_eq!(doc.tables.spearman.len(), 4);
}

#[test]
fn rerun_produces_identical_reports() {
    let cfg = small();
    let a = ReportDocument::new(&Report::Ood(run_ood(&cfg).unwrap()), &cfg)
        .to_json()
        .unwrap();
    let b = ReportDocument::new(&Report::Ood(run_ood(&cfg).unwrap()), &cfg)
        .to_json()
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn csv_dataset_path_resolves_against_config_file() {
    let tmp = TempDir::new().unwrap();
    let data = small().dataset.load().unwrap();
    fs::create_dir(tmp.path().join("data")).unwrap();
    save_csv(&data, tmp.path().join("data/blobs.csv"), "label").unwrap();
    let text = r#"{"dataset": {"kind": "csv", "path": "data/blobs.csv"}, "folds": 3, "methods": ["macest"]}"#;
    fs::write(tmp.path().join("cfg.json"), text).unwrap();
    let cfg = ExperimentConfig::read(tmp.path().join("cfg.json")).unwrap();
    let r = run_aleatoric(&cfg).unwrap();
    assert_eq!(r.rows_evaluated, data.len());
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        ExperimentConfig {
            methods: vec![],
            ..small()
        },
        ExperimentConfig { folds: 1, ..small() },
        ExperimentConfig {
            noise_schedule: vec![1.0, 0.5],
            ..small()
        },
        ExperimentConfig {
            noise_samples: 10,
            ..small()
        },
        ExperimentConfig {
            methods: vec![Method::Platt, Method::Platt],
            ..small()
        },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err());
        assert!(run_drift(&cfg).is_err());
    }
    assert!(ExperimentConfig::from_json(r#"{"fold": 3}"#).is_err());
}
