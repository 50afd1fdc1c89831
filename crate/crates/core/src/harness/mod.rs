//! The three experiments (aleatoric k-fold comparison, Gaussian drift, OOD
//! trustworthiness) and their reports.
//!
//! Every experiment fits the same pipeline: an embedding fitted on the
//! predictor-training rows, a kNN point predictor in embedded space, then
//! MACEst and the baseline calibrators on the graph and calibration rows.

mod aleatoric;
mod drift;
mod ood;
mod plot;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::calibrators::{self, IsotonicModel, PlattModel, TemperatureModel};
use crate::dataset::{self, Dataset, DEFAULT_LABEL_COLUMN, DEFAULT_SPLIT_FRACTIONS};
use crate::embedding::{Embedding, EmbeddingKind};
use crate::error::{Error, Result};
use crate::macest::{self, MacestConfig, MacestModel};
use crate::metrics::Metric;
use crate::neighbour::Backend;
use crate::predictor::{KnnClassifier, PredictionSet, DEFAULT_VOTE_K};

pub use aleatoric::{run_aleatoric, CalibrationReport, MethodCalibration, SkippedFold};
pub use drift::{run_drift, DriftLevel, DriftReport};
pub use ood::{run_ood, AnomalySummary, KsEntry, OodMethod, OodReport, HISTOGRAM_BINS};
pub use plot::emit_plots;
pub use report::{emit_report, MethodEntry, Report, ReportDocument, SpearmanPair, Tables, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Macest,
    Platt,
    Isotonic,
    Temperature,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Macest, Method::Platt, Method::Isotonic, Method::Temperature];

    pub fn name(self) -> &'static str {
        match self {
            Method::Macest => "macest",
            Method::Platt => "platt",
            Method::Isotonic => "isotonic",
            Method::Temperature => "temperature",
        }
    }

    pub fn is_baseline(self) -> bool {
        self != Method::Macest
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

/// Where the experiment's rows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
    Blobs {
        n_per_class: usize,
        classes: usize,
        dim: usize,
        separation: f64,
        seed: u64,
    },
    Spiral {
        n_per_class: usize,
        noise_sd: f64,
        seed: u64,
    },
}

fn default_label_column() -> String {
    DEFAULT_LABEL_COLUMN.to_string()
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Csv { path, label_column } => dataset::load_csv(path, label_column),
            DatasetSource::Blobs {
                n_per_class,
                classes,
                dim,
                separation,
                seed,
            } => dataset::gen_blobs(*n_per_class, *classes, *dim, *separation, *seed),
            DatasetSource::Spiral {
                n_per_class,
                noise_sd,
                seed,
            } => dataset::gen_spiral(*n_per_class, *noise_sd, *seed),
        }
    }
}

/// Experiment configuration, read from and echoed to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub embedding: EmbeddingKind,
    pub methods: Vec<Method>,
    pub metrics: Vec<Metric>,
    pub macest: MacestConfig,
    /// Neighbours voting in the built-in point predictor.
    pub predictor_k: usize,
    pub predictor_backend: Backend,
    pub folds: usize,
    /// Predictor-train, graph, calibration and test fractions.
    pub split_fractions: [f64; 4],
    /// Drift noise standard deviations, strictly increasing.
    pub noise_schedule: Vec<f64>,
    pub noise_samples: usize,
    pub trust_k: usize,
    /// Percentile of calibration epistemic terms used as anomaly threshold.
    pub anomaly_percentile: f64,
    pub bins: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::Blobs {
                n_per_class: 2000,
                classes: 3,
                dim: 10,
                separation: 2.5,
                seed: 7,
            },
            embedding: EmbeddingKind::Std,
            methods: Method::ALL.to_vec(),
            metrics: Metric::ALL.to_vec(),
            macest: MacestConfig::default(),
            predictor_k: DEFAULT_VOTE_K,
            predictor_backend: Backend::Exact,
            folds: 10,
            split_fractions: DEFAULT_SPLIT_FRACTIONS,
            noise_schedule: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            noise_samples: 1000,
            trust_k: 10,
            anomaly_percentile: 99.9,
            bins: 10,
            seed: 42,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file; a relative CSV dataset path is taken relative to
    /// the file's directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let DatasetSource::Csv { path: csv, .. } = &mut cfg.dataset {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("methods must not repeat");
        }
        if self.metrics.is_empty() {
            return bad("at least one metric is required");
        }
        if self.folds < 2 {
            return bad("fold count must be at least 2");
        }
        if self.predictor_k == 0 || self.trust_k == 0 || self.bins == 0 {
            return bad("predictor_k, trust_k and bins must be positive");
        }
        if self.noise_schedule.is_empty() || self.noise_schedule.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("noise schedule must be non-empty, finite and non-negative");
        }
        if self.noise_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad("noise schedule must be strictly increasing");
        }
        if self.noise_samples < 100 {
            return bad("noise_samples must be at least 100");
        }
        if !(0.0..=100.0).contains(&self.anomaly_percentile) {
            return bad("anomaly_percentile must lie in [0, 100]");
        }
        Ok(())
    }

    fn load_dataset(&self) -> Result<Dataset> {
        self.validate()?;
        self.dataset.load()
    }

    fn scheme(&self) -> crate::metrics::BinningScheme {
        crate::metrics::BinningScheme::equal_mass(self.bins)
    }
}

/// Predictor, MACEst and baselines fitted on one split.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub embedding: Embedding,
    /// Point predictor over embedded coordinates.
    pub classifier: KnnClassifier,
    pub macest: Option<MacestModel>,
    pub platt: Option<PlattModel>,
    pub isotonic: Option<IsotonicModel>,
    pub temperature: Option<TemperatureModel>,
    /// Embedded graph rows, used for trust scores and noise ranges.
    pub graph_embedded: Array2<f64>,
    pub graph_labels: Vec<usize>,
}

impl Pipeline {
    pub fn fit(cfg: &ExperimentConfig, train: &Dataset, graph: &Dataset, calibration: &Dataset) -> Result<Pipeline> {
        let embedding = Embedding::fit(cfg.embedding, train.features())?;
        let train_z = embedding.apply(train.features())?;
        let class_count = train
            .class_count()
            .max(graph.class_count())
            .max(calibration.class_count());
        let classifier = KnnClassifier::from_parts(
            train_z.view(),
            train.labels().to_vec(),
            class_count,
            cfg.predictor_k.min(train.len()),
            cfg.predictor_backend,
            cfg.macest.hnsw,
        )?;
        let graph_z = embedding.apply(graph.features())?;
        let graph_pred = classifier.predict(graph_z.view())?.with_truth(graph.labels())?;
        let cal_z = embedding.apply(calibration.features())?;
        let cal_pred = classifier.predict(cal_z.view())?.with_truth(calibration.labels())?;
        let cal_correct = cal_pred.correct()?;

        let wants = |m: Method| cfg.methods.contains(&m);
        let macest = if wants(Method::Macest) {
            Some(macest::fit(
                graph,
                &graph_pred,
                calibration,
                &cal_pred,
                embedding.clone(),
                &cfg.macest,
            )?)
        } else {
            None
        };
        let platt = if wants(Method::Platt) {
            Some(calibrators::fit_platt(&cal_pred.scores, cal_correct)?)
        } else {
            None
        };
        let isotonic = if wants(Method::Isotonic) {
            Some(calibrators::fit_isotonic(&cal_pred.scores, cal_correct)?)
        } else {
            None
        };
        let temperature = if wants(Method::Temperature) {
            let scores = cal_pred.class_scores.as_ref().expect("kNN emits class scores");
            Some(calibrators::fit_temperature(
                scores.view(),
                &cal_pred.predicted,
                cal_correct,
            )?)
        } else {
            None
        };
        Ok(Pipeline {
            embedding,
            classifier,
            macest,
            platt,
            isotonic,
            temperature,
            graph_embedded: graph_z,
            graph_labels: graph.labels().to_vec(),
        })
    }

    pub fn predict_embedded(&self, z: ArrayView2<'_, f64>) -> Result<PredictionSet> {
        self.classifier.predict(z)
    }

    /// Predicted-class confidence of `method` for embedded rows.
    pub fn confidences(&self, method: Method, z: ArrayView2<'_, f64>, pred: &PredictionSet) -> Result<Vec<f64>> {
        let missing = || Error::InvalidArgument(format!("method {method} was not fitted"));
        match method {
            Method::Macest => {
                let m = self.macest.as_ref().ok_or_else(missing)?;
                Ok(m.estimate_batch_embedded(z, &pred.predicted)?
                    .into_iter()
                    .map(|e| e.confidence)
                    .collect())
            }
            Method::Platt => {
                let m = self.platt.as_ref().ok_or_else(missing)?;
                Ok(pred.scores.iter().map(|&s| m.apply(s)).collect())
            }
            Method::Isotonic => {
                let m = self.isotonic.as_ref().ok_or_else(missing)?;
                Ok(pred.scores.iter().map(|&s| m.apply(s)).collect())
            }
            Method::Temperature => {
                let m = self.temperature.as_ref().ok_or_else(missing)?;
                let scores = pred.class_scores.as_ref().ok_or_else(missing)?;
                Ok(scores
                    .rows()
                    .into_iter()
                    .zip(&pred.predicted)
                    .map(|(row, &c)| m.apply(row)[c])
                    .collect())
            }
        }
    }
}

/// Distribution summary of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Summary> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Empty("summary input"));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let q = |p| macest::percentile(values, p);
        Ok(Summary {
            mean,
            sd,
            min: q(0.0)?,
            q25: q(25.0)?,
            median: q(50.0)?,
            q75: q(75.0)?,
            max: q(100.0)?,
        })
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
