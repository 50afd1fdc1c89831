use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Method, Pipeline};
use crate::dataset::{kfold, split_rows, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{reliability, with_error_bars, MetricWithError, ReliabilityBin};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCalibration {
    pub method: Method,
    /// Metric name to fold mean with error bar.
    pub metrics: BTreeMap<String, MetricWithError>,
    pub per_fold: BTreeMap<String, Vec<f64>>,
    /// Reliability bins over the pooled test rows of all completed folds.
    pub reliability: Vec<ReliabilityBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub fold: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub methods: Vec<MethodCalibration>,
    pub accuracy: MetricWithError,
    pub fold_accuracy: Vec<f64>,
    pub folds: usize,
    pub skipped_folds: Vec<SkippedFold>,
    pub rows_evaluated: usize,
}

impl CalibrationReport {
    pub fn method(&self, m: Method) -> Option<&MethodCalibration> {
        self.methods.iter().find(|r| r.method == m)
    }
}

struct FoldOutcome {
    accuracy: f64,
    /// Per method: confidences on the fold's test rows.
    confidences: Vec<Vec<f64>>,
    correct: Vec<bool>,
}

fn run_fold(
    cfg: &ExperimentConfig,
    d: &Dataset,
    train_rows: &[usize],
    test_rows: &[usize],
    seed: u64,
) -> Result<FoldOutcome> {
    let f = &cfg.split_fractions;
    let total = f[0] + f[1] + f[2];
    let parts = split_rows(train_rows.len(), &[f[0] / total, f[1] / total, f[2] / total], seed)?;
    let pick = |part: &[usize]| d.select(&part.iter().map(|&i| train_rows[i]).collect::<Vec<_>>());
    let (train, graph, cal) = (pick(&parts[0])?, pick(&parts[1])?, pick(&parts[2])?);
    let pipeline = Pipeline::fit(cfg, &train, &graph, &cal)?;
    let test = d.select(test_rows)?;
    let z = pipeline.embedding.apply(test.features())?;
    let pred = pipeline.predict_embedded(z.view())?.with_truth(test.labels())?;
    let confidences = cfg
        .methods
        .iter()
        .map(|&m| pipeline.confidences(m, z.view(), &pred))
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldOutcome {
        accuracy: pred.accuracy().expect("non-empty test fold"),
        confidences,
        correct: pred.correct()?.to_vec(),
    })
}

/// k-fold comparison of every configured method on held-out folds. Each
/// fold's training rows are split into predictor-train, graph and
/// calibration parts; the fold's own rows are the test set.
pub fn run_aleatoric(cfg: &ExperimentConfig) -> Result<CalibrationReport> {
    let d = cfg.load_dataset()?;
    let plan = kfold(&d, cfg.folds, cfg.seed)?;
    let outcomes: Vec<Result<FoldOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.folds)
            .map(|fold| {
                let (d, plan) = (&d, &plan);
                s.spawn(move || {
                    let seed = derive_seed(cfg.seed, fold as u64 + 1);
                    run_fold(cfg, d, &plan.train_rows(fold), &plan.test_rows(fold), seed)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fold thread panicked"))
            .collect()
    });

    let mut completed = Vec::new();
    let mut skipped_folds = Vec::new();
    for (fold, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => completed.push(o),
            Err(e @ Error::ClassTooSmall { .. }) => {
                log::warn!("fold {fold} skipped: {e}");
                skipped_folds.push(SkippedFold {
                    fold,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    if completed.len() < 2 {
        return Err(Error::InvalidData(format!(
            "only {} of {} folds could be evaluated",
            completed.len(),
            cfg.folds
        )));
    }

    let scheme = cfg.scheme();
    let all_correct: Vec<bool> = completed.iter().flat_map(|o| o.correct.iter().copied()).collect();
    let mut methods = Vec::with_capacity(cfg.methods.len());
    for (mi, &method) in cfg.methods.iter().enumerate() {
        let mut metrics = BTreeMap::new();
        let mut per_fold = BTreeMap::new();
        for &metric in &cfg.metrics {
            let values = completed
                .iter()
                .map(|o| metric.evaluate(&o.confidences[mi], &o.correct, scheme))
                .collect::<Result<Vec<_>>>()?;
            metrics.insert(metric.name().to_string(), with_error_bars(&values)?);
            per_fold.insert(metric.name().to_string(), values);
        }
        let pooled: Vec<f64> = completed
            .iter()
            .flat_map(|o| o.confidences[mi].iter().copied())
            .collect();
        methods.push(MethodCalibration {
            method,
            metrics,
            per_fold,
            reliability: reliability(&pooled, &all_correct, scheme)?.bins,
        });
    }
    let fold_accuracy: Vec<f64> = completed.iter().map(|o| o.accuracy).collect();
    Ok(CalibrationReport {
        methods,
        accuracy: with_error_bars(&fold_accuracy)?,
        fold_accuracy,
        folds: cfg.folds,
        skipped_folds,
        rows_evaluated: all_correct.len(),
    })
}
