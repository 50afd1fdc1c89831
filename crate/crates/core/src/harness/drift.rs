use serde::{Deserialize, Serialize};

use super::{mean, ExperimentConfig, Method, Pipeline};
use crate::dataset::{add_gaussian_noise, split_four};
use crate::error::Result;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftLevel {
    pub sd: f64,
    pub accuracy: f64,
    /// Aligned with [`DriftReport::methods`].
    pub mean_confidence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub methods: Vec<Method>,
    pub levels: Vec<DriftLevel>,
    pub test_rows: usize,
}

impl DriftReport {
    pub fn mean_confidence(&self, level: usize, m: Method) -> Option<f64> {
        let i = self.methods.iter().position(|&x| x == m)?;
        Some(self.levels.get(level)?.mean_confidence[i])
    }
}

/// Adds Gaussian noise of increasing scale to the embedded test rows and
/// tracks accuracy against each method's mean confidence.
pub fn run_drift(cfg: &ExperimentConfig) -> Result<DriftReport> {
    let d = cfg.load_dataset()?;
    let split = split_four(&d, cfg.split_fractions, cfg.seed)?;
    let pipeline = Pipeline::fit(cfg, &split.predictor_train, &split.graph, &split.calibration)?;
    let z = pipeline.embedding.apply(split.test.features())?;
    let levels = cfg
        .noise_schedule
        .iter()
        .enumerate()
        .map(|(i, &sd)| {
            let noisy = add_gaussian_noise(z.view(), sd, derive_seed(cfg.seed, 1000 + i as u64))?;
            let pred = pipeline
                .predict_embedded(noisy.view())?
                .with_truth(split.test.labels())?;
            let mean_confidence = cfg
                .methods
                .iter()
                .map(|&m| Ok(mean(&pipeline.confidences(m, noisy.view(), &pred)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(DriftLevel {
                sd,
                accuracy: pred.accuracy().expect("non-empty test split"),
                mean_confidence,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DriftReport {
        methods: cfg.methods.clone(),
        levels,
        test_rows: split.test.len(),
    })
}
