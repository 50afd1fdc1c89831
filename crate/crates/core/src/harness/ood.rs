use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Method, Pipeline, Summary};
use crate::dataset::{column_ranges, gen_uniform_noise_in_box, split_four};
use crate::error::Result;
use crate::metrics::{ks_statistic, spearman};
use crate::rng::derive_seed;
use crate::trust::TrustScorer;

/// Confidence histograms use this many equal-width bins on `[0, 1]`.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodMethod {
    pub method: Method,
    pub in_sample: Summary,
    pub noise: Summary,
    /// Spearman correlation of confidence with trust score; `None` when a
    /// side is constant and the correlation is undefined.
    pub spearman_in_sample: Option<f64>,
    pub spearman_noise: Option<f64>,
    pub histogram_in_sample: Vec<usize>,
    pub histogram_noise: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub baseline: Method,
    /// KS statistic between MACEst's and the baseline's noise confidences.
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySummary {
    pub percentile: f64,
    pub threshold: f64,
    pub test_flagged: f64,
    pub noise_flagged: f64,
    /// Uniform noise in a box displaced ten ranges beyond the data.
    pub far_noise_flagged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub methods: Vec<OodMethod>,
    pub ks: Vec<KsEntry>,
    pub trust_in_sample: Summary,
    pub trust_noise: Summary,
    pub accuracy_in_sample: f64,
    pub test_rows: usize,
    pub noise_rows: usize,
    pub anomaly: Option<AnomalySummary>,
}

impl OodReport {
    pub fn method(&self, m: Method) -> Option<&OodMethod> {
        self.methods.iter().find(|r| r.method == m)
    }
}

fn histogram(values: &[f64]) -> Vec<usize> {
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &v in values {
        let i = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[i] += 1;
    }
    counts
}

fn fraction(flags: &[bool]) -> f64 {
    flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

/// Confidence and trust on in-sample test rows and on uniform noise spanning
/// the embedded graph rows' bounding box.
pub fn run_ood(cfg: &ExperimentConfig) -> Result<OodReport> {
    let d = cfg.load_dataset()?;
    let split = split_four(&d, cfg.split_fractions, cfg.seed)?;
    let pipeline = Pipeline::fit(cfg, &split.predictor_train, &split.graph, &split.calibration)?;
    let test_z = pipeline.embedding.apply(split.test.features())?;
    let test_pred = pipeline
        .predict_embedded(test_z.view())?
        .with_truth(split.test.labels())?;

    let (lows, mut highs) = column_ranges(pipeline.graph_embedded.view());
    for (lo, hi) in lows.iter().zip(highs.iter_mut()) {
        if *hi <= *lo {
            *hi = *lo + 1.0;
        }
    }
    let noise = gen_uniform_noise_in_box(cfg.noise_samples, &lows, &highs, derive_seed(cfg.seed, 2000))?;
    let noise_pred = pipeline.predict_embedded(noise.view())?;

    let trust = TrustScorer::build(
        pipeline.graph_embedded.view(),
        &pipeline.graph_labels,
        pipeline.classifier.class_count(),
        cfg.trust_k,
        cfg.macest.backend,
        cfg.macest.hnsw,
    )?;
    let trust_test = trust.score_batch(test_z.view(), &test_pred.predicted)?;
    let trust_noise = trust.score_batch(noise.view(), &noise_pred.predicted)?;

    let mut methods = Vec::with_capacity(cfg.methods.len());
    let mut noise_conf = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let c_test = pipeline.confidences(m, test_z.view(), &test_pred)?;
        let c_noise = pipeline.confidences(m, noise.view(), &noise_pred)?;
        methods.push(OodMethod {
            method: m,
            in_sample: Summary::of(&c_test)?,
            noise: Summary::of(&c_noise)?,
            spearman_in_sample: spearman(&c_test, &trust_test).ok(),
            spearman_noise: spearman(&c_noise, &trust_noise).ok(),
            histogram_in_sample: histogram(&c_test),
            histogram_noise: histogram(&c_noise),
        });
        noise_conf.push(c_noise);
    }

    let mut ks = Vec::new();
    if let Some(mi) = cfg.methods.iter().position(|&m| m == Method::Macest) {
        for (bi, &b) in cfg.methods.iter().enumerate().filter(|(_, m)| m.is_baseline()) {
            ks.push(KsEntry {
                baseline: b,
                statistic: ks_statistic(&noise_conf[mi], &noise_conf[bi])?,
            });
        }
    }

    let anomaly = match &pipeline.macest {
        Some(model) => {
            let threshold = model.epistemic_threshold(cfg.anomaly_percentile)?;
            let far_lows: Vec<f64> = lows.iter().zip(&highs).map(|(l, h)| h + 10.0 * (h - l)).collect();
            let far_highs: Vec<f64> = lows.iter().zip(&highs).map(|(l, h)| h + 11.0 * (h - l)).collect();
            let far = gen_uniform_noise_in_box(cfg.noise_samples, &far_lows, &far_highs, derive_seed(cfg.seed, 2001))?;
            Some(AnomalySummary {
                percentile: cfg.anomaly_percentile,
                threshold,
                test_flagged: fraction(&model.detect_anomalies_embedded(test_z.view(), threshold)?),
                noise_flagged: fraction(&model.detect_anomalies_embedded(noise.view(), threshold)?),
                far_noise_flagged: fraction(&model.detect_anomalies_embedded(far.view(), threshold)?),
            })
        }
        None => None,
    };

    Ok(OodReport {
        methods,
        ks,
        trust_in_sample: Summary::of(&trust_test)?,
        trust_noise: Summary::of(&trust_noise)?,
        accuracy_in_sample: test_pred.accuracy().expect("non-empty test split"),
        test_rows: split.test.len(),
        noise_rows: cfg.noise_samples,
        anomaly,
    })
}
