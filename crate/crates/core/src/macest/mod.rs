//! The MACEst confidence estimator.
//!
//! For a query `x` and each class `c`, the `k` nearest graph rows labelled
//! `c` give two local terms:
//!
//! * epistemic `K_c = sum_i d_i / i` over the rank-ordered neighbour
//!   distances, which grows as `x` moves away from known data;
//! * aleatoric `eps_c = sum_i wrong_i / max(d_i, d_min)`, the
//!   distance-weighted count of neighbours the point predictor got wrong.
//!
//! They combine linearly into `sigma_c = alpha * eps_c + beta * K_c`. Each
//! sigma is divided by the mean over classes and a negative softmax with
//! sharpness `s` turns the relative scores into probabilities,
//! `p_c ∝ exp(-s * sigma_c / mean(sigma))`. The confidence of a point
//! prediction is the probability of the predicted class. `alpha`, `beta` and
//! `s` are chosen to minimize the expected calibration error of those
//! confidences on a held-out calibration set.

mod persist;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::metrics::{self, BinningScheme};
use crate::neighbour::{Backend, HnswParams, NeighbourIndex};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::predictor::{KnnClassifier, PredictionSet};

pub use persist::{from_bytes, load, save, to_bytes, FORMAT_VERSION, MAGIC};

/// Sum of neighbour distances weighted by inverse rank (1-based).
/// Distances must be sorted ascending and non-negative.
pub fn rank_weighted_distance(distances: &[f64]) -> Result<f64> {
    if distances.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::InvalidArgument("distances must be >= 0".into()));
    }
    if distances.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("distances must be sorted ascending".into()));
    }
    Ok(distances
        .iter()
        .enumerate()
        .map(|(i, d)| d / (i + 1) as f64)
        .fold(0.0, |acc, v| acc + v))
}

/// Inverse-distance weighted count of incorrectly predicted neighbours.
/// Distances below `d_min` are floored to it.
pub fn weighted_error(distances: &[f64], incorrect: &[bool], d_min: f64) -> Result<f64> {
    if distances.len() != incorrect.len() {
        return Err(Error::LengthMismatch {
            left: distances.len(),
            right: incorrect.len(),
        });
    }
    if distances.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::InvalidArgument("distances must be >= 0".into()));
    }
    Ok(distances
        .iter()
        .zip(incorrect)
        .filter(|(_, &wrong)| wrong)
        .map(|(&d, _)| 1.0 / d.max(d_min))
        .fold(0.0, |acc, v| acc + v))
}

/// Probabilities from per-class uncertainties with unit sharpness.
pub fn normalize(sigmas: &[f64]) -> Result<Vec<f64>> {
    normalize_with_sharpness(sigmas, 1.0).map(|(p, _)| p)
}

/// `p_c ∝ exp(-sharpness * sigma_c / mean(sigma))`.
///
/// If every sigma is zero the relative scores are undefined; the result is
/// uniform and the returned flag is set.
pub fn normalize_with_sharpness(sigmas: &[f64], sharpness: f64) -> Result<(Vec<f64>, bool)> {
    if sigmas.len() < 2 {
        return Err(Error::InvalidArgument("normalization needs at least 2 classes".into()));
    }
    if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument("sigmas must be finite and >= 0".into()));
    }
    if !(sharpness > 0.0) || !sharpness.is_finite() {
        return Err(Error::InvalidArgument("sharpness must be positive".into()));
    }
    let mut out = vec![0.0; sigmas.len()];
    let degenerate = !softmax_into(sigmas, sharpness, &mut out);
    if degenerate {
        log::warn!("all class uncertainties are zero; returning uniform probabilities");
    }
    Ok((out, degenerate))
}

/// Writes the normalized probabilities into `out`; returns false (and a
/// uniform vector) when the mean uncertainty is zero.
fn softmax_into(sigmas: &[f64], sharpness: f64, out: &mut [f64]) -> bool {
    let c = sigmas.len();
    let mean = sigmas.iter().sum::<f64>() / c as f64;
    if !(mean > 0.0) {
        out.iter_mut().for_each(|p| *p = 1.0 / c as f64);
        return false;
    }
    let min_rel = sigmas.iter().fold(f64::INFINITY, |m, &s| m.min(s / mean));
    let mut total = 0.0;
    for (p, &s) in out.iter_mut().zip(sigmas) {
        *p = (-sharpness * (s / mean - min_rel)).exp();
        total += *p;
    }
    out.iter_mut().for_each(|p| *p /= total);
    true
}

/// Uncertainty terms for one class at one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassUncertainty {
    pub class: usize,
    pub sigma: f64,
    pub epistemic: f64,
    pub aleatoric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEstimate {
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
    /// Probability that the point prediction is correct.
    pub confidence: f64,
    pub uncertainties: Vec<ClassUncertainty>,
    /// Set when another class has strictly higher probability than the
    /// predicted one.
    pub disagreement: bool,
    /// Set when every class uncertainty was zero (uniform output).
    pub degenerate: bool,
}

impl ConfidenceEstimate {
    pub fn argmax(&self) -> usize {
        argmax(&self.probabilities)
    }

    pub fn min_epistemic(&self) -> f64 {
        self.uncertainties
            .iter()
            .map(|u| u.epistemic)
            .fold(f64::INFINITY, f64::min)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Bounds of the logarithmic grid for alpha and beta.
    pub grid_low: f64,
    pub grid_high: f64,
    pub grid_points: usize,
    /// Bounds of the logarithmic grid for the softmax sharpness.
    pub sharpness_low: f64,
    pub sharpness_high: f64,
    pub sharpness_points: usize,
    pub refine_iterations: usize,
    pub tolerance: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            grid_low: 1e-3,
            grid_high: 1e3,
            grid_points: 25,
            sharpness_low: 0.1,
            sharpness_high: 100.0,
            sharpness_points: 13,
            refine_iterations: 200,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacestConfig {
    pub k: usize,
    pub alpha_init: f64,
    pub beta_init: f64,
    pub sharpness_init: f64,
    pub optimizer: OptimizerSettings,
    /// Equal-mass bins of the training ECE.
    pub bins: usize,
    pub d_min: f64,
    pub backend: Backend,
    pub hnsw: HnswParams,
}

impl Default for MacestConfig {
    fn default() -> Self {
        MacestConfig {
            k: 10,
            alpha_init: 1.0,
            beta_init: 1.0,
            sharpness_init: 1.0,
            optimizer: OptimizerSettings::default(),
            bins: 10,
            d_min: 1e-6,
            backend: Backend::Hnsw,
            hnsw: HnswParams::default(),
        }
    }
}

impl MacestConfig {
    fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        let ok = self.k >= 1
            && self.d_min > 0.0
            && self.bins >= 1
            && self.alpha_init > 0.0
            && self.beta_init > 0.0
            && self.sharpness_init > 0.0
            && o.grid_low > 0.0
            && o.grid_high >= o.grid_low
            && o.grid_points >= 1
            && o.sharpness_low > 0.0
            && o.sharpness_high >= o.sharpness_low
            && o.sharpness_points >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid MACEst config: {self:?}")))
        }
    }
}

/// Graph rows of one class with their point-prediction errors.
#[derive(Debug, Clone)]
pub(crate) struct ClassGraph {
    pub(crate) k: usize,
    /// Embedded coordinates, `n_c x D'`.
    pub(crate) points: Array2<f64>,
    pub(crate) incorrect: Vec<bool>,
    pub(crate) index: NeighbourIndex,
}

impl ClassGraph {
    fn new(points: Array2<f64>, incorrect: Vec<bool>, k: usize, backend: Backend, hnsw: HnswParams) -> Result<Self> {
        let index = NeighbourIndex::build(points.view(), backend, hnsw)?;
        Ok(ClassGraph {
            k,
            points,
            incorrect,
            index,
        })
    }

    /// `(epistemic, aleatoric)` at an embedded query.
    fn terms(&self, x: &[f64], d_min: f64) -> Result<(f64, f64)> {
        let nbrs = self.index.query_slice(x, self.k)?;
        let wrong: Vec<bool> = nbrs.ids.iter().map(|&i| self.incorrect[i]).collect();
        Ok((
            rank_weighted_distance(&nbrs.distances)?,
            weighted_error(&nbrs.distances, &wrong, d_min)?,
        ))
    }
}

/// A fitted estimator. Immutable; all query methods take `&self`.
#[derive(Debug, Clone)]
pub struct MacestModel {
    pub alpha: f64,
    pub beta: f64,
    pub sharpness: f64,
    pub k: usize,
    pub d_min: f64,
    class_count: usize,
    classes: Vec<ClassGraph>,
    embedding: Embedding,
    backend: Backend,
    hnsw: HnswParams,
    /// Per calibration row, the minimum epistemic term over classes.
    calibration_epistemic: Vec<f64>,
    /// Calibration ECE at the fitted parameters.
    pub fitted_ece: f64,
    predictor: Option<KnnClassifier>,
}

/// Per-row, per-class `(epistemic, aleatoric)` terms.
#[derive(Debug, Clone)]
pub struct UncertaintyTerms {
    pub epistemic: Array2<f64>,
    pub aleatoric: Array2<f64>,
}

impl MacestModel {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn hnsw_params(&self) -> &HnswParams {
        &self.hnsw
    }

    pub fn input_dim(&self) -> usize {
        self.embedding.input_dim()
    }

    pub fn calibration_epistemic(&self) -> &[f64] {
        &self.calibration_epistemic
    }

    pub fn predictor(&self) -> Option<&KnnClassifier> {
        self.predictor.as_ref()
    }

    /// Effective neighbour count for `class` (lowered for small classes).
    pub fn class_k(&self, class: usize) -> usize {
        self.classes[class].k
    }

    /// Embedded graph coordinates of `class`.
    pub fn class_points(&self, class: usize) -> ArrayView2<'_, f64> {
        self.classes[class].points.view()
    }

    pub fn class_incorrect(&self, class: usize) -> &[bool] {
        &self.classes[class].incorrect
    }

    /// Stores a point predictor operating on embedded features.
    pub fn with_predictor(mut self, classifier: KnnClassifier) -> Result<Self> {
        if classifier.index().dim() != self.embedding.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.embedding.output_dim(),
                got: classifier.index().dim(),
            });
        }
        self.predictor = Some(classifier);
        Ok(self)
    }

    /// Predicts raw-feature rows with the stored point predictor.
    pub fn predict_points(&self, x: ArrayView2<'_, f64>) -> Result<PredictionSet> {
        let classifier = self
            .predictor
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no stored point predictor".into()))?;
        classifier.predict(self.embedding.apply(x)?.view())
    }

    /// Uncertainty of `class` at an already-embedded query.
    pub fn class_sigma(&self, x: ArrayView1<'_, f64>, class: usize) -> Result<ClassUncertainty> {
        let graph = self
            .classes
            .get(class)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown class {class}")))?;
        let x = x.to_vec();
        let (epistemic, aleatoric) = graph.terms(&x, self.d_min)?;
        Ok(ClassUncertainty {
            class,
            sigma: self.alpha * aleatoric + self.beta * epistemic,
            epistemic,
            aleatoric,
        })
    }

    /// Confidence for a raw-feature query.
    pub fn estimate(&self, x: ArrayView1<'_, f64>, predicted_class: usize) -> Result<ConfidenceEstimate> {
        let z = self.embedding.apply_row(x)?;
        self.estimate_embedded(z.view(), predicted_class)
    }

    /// Confidence for a query already in embedded coordinates.
    pub fn estimate_embedded(&self, z: ArrayView1<'_, f64>, predicted_class: usize) -> Result<ConfidenceEstimate> {
        if predicted_class >= self.class_count {
            return Err(Error::InvalidArgument(format!(
                "predicted class {predicted_class} outside 0..{}",
                self.class_count
            )));
        }
        if z.len() != self.embedding.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.embedding.output_dim(),
                got: z.len(),
            });
        }
        let uncertainties = (0..self.class_count)
            .map(|c| self.class_sigma(z, c))
            .collect::<Result<Vec<_>>>()?;
        let sigmas: Vec<f64> = uncertainties.iter().map(|u| u.sigma).collect();
        let (probabilities, degenerate) = normalize_with_sharpness(&sigmas, self.sharpness)?;
        let confidence = probabilities[predicted_class];
        let disagreement = probabilities.iter().any(|&p| p > confidence);
        Ok(ConfidenceEstimate {
            probabilities,
            predicted_class,
            confidence,
            uncertainties,
            disagreement,
            degenerate,
        })
    }

    /// Estimates for every row of a raw-feature matrix.
    pub fn estimate_batch(&self, x: ArrayView2<'_, f64>, predicted: &[usize]) -> Result<Vec<ConfidenceEstimate>> {
        let z = self.embedding.apply(x)?;
        self.estimate_batch_embedded(z.view(), predicted)
    }

    pub fn estimate_batch_embedded(
        &self,
        z: ArrayView2<'_, f64>,
        predicted: &[usize],
    ) -> Result<Vec<ConfidenceEstimate>> {
        if z.nrows() != predicted.len() {
            return Err(Error::LengthMismatch {
                left: z.nrows(),
                right: predicted.len(),
            });
        }
        z.rows()
            .into_iter()
            .zip(predicted)
            .map(|(row, &p)| self.estimate_embedded(row, p))
            .collect()
    }

    /// Epistemic and aleatoric terms for embedded rows.
    pub fn terms_embedded(&self, z: ArrayView2<'_, f64>) -> Result<UncertaintyTerms> {
        let n = z.nrows();
        let mut epistemic = Array2::zeros((n, self.class_count));
        let mut aleatoric = Array2::zeros((n, self.class_count));
        for (i, row) in z.rows().into_iter().enumerate() {
            let x = row.to_vec();
            for (c, graph) in self.classes.iter().enumerate() {
                let (e, a) = graph.terms(&x, self.d_min)?;
                epistemic[[i, c]] = e;
                aleatoric[[i, c]] = a;
            }
        }
        Ok(UncertaintyTerms { epistemic, aleatoric })
    }

    /// Flags raw-feature rows whose smallest per-class epistemic term exceeds
    /// `threshold`.
    pub fn detect_anomalies(&self, x: ArrayView2<'_, f64>, threshold: f64) -> Result<Vec<bool>> {
        let z = self.embedding.apply(x)?;
        self.detect_anomalies_embedded(z.view(), threshold)
    }

    pub fn detect_anomalies_embedded(&self, z: ArrayView2<'_, f64>, threshold: f64) -> Result<Vec<bool>> {
        if !(threshold > 0.0) {
            return Err(Error::InvalidArgument("anomaly threshold must be positive".into()));
        }
        let terms = self.terms_embedded(z)?;
        Ok(terms
            .epistemic
            .rows()
            .into_iter()
            .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min) > threshold)
            .collect())
    }

    /// The `q`-th percentile (0..=100, linear interpolation) of the
    /// calibration set's minimum epistemic terms.
    pub fn epistemic_threshold(&self, q: f64) -> Result<f64> {
        percentile(&self.calibration_epistemic, q)
    }
}

/// Linear-interpolation percentile, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile input"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("percentile {q} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Per-class graphs built from the graph split.
fn build_classes(
    graph: ArrayView2<'_, f64>,
    labels: &[usize],
    incorrect: &[bool],
    class_count: usize,
    cfg: &MacestConfig,
) -> Result<Vec<ClassGraph>> {
    (0..class_count)
        .map(|c| {
            let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if rows.is_empty() {
                return Err(Error::ClassTooSmall {
                    class: c,
                    available: 0,
                    required: 1,
                });
            }
            let k = cfg.k.min(rows.len());
            if k < cfg.k {
                log::warn!("class {c} has {} graph rows; using k = {k}", rows.len());
            }
            let points = graph.select(Axis(0), &rows);
            let wrong = rows.iter().map(|&i| incorrect[i]).collect();
            ClassGraph::new(points, wrong, k, cfg.backend, cfg.hnsw)
        })
        .collect()
}

/// Calibration-set objective: ECE of predicted-class confidences.
struct Objective<'a> {
    terms: &'a UncertaintyTerms,
    predicted: &'a [usize],
    correct: &'a [bool],
    scheme: BinningScheme,
}

impl Objective<'_> {
    fn confidences(&self, alpha: f64, beta: f64, sharpness: f64) -> Vec<f64> {
        let c = self.terms.epistemic.ncols();
        let mut sigma = vec![0.0; c];
        let mut p = vec![0.0; c];
        (0..self.predicted.len())
            .map(|i| {
                for (j, s) in sigma.iter_mut().enumerate() {
                    *s = alpha * self.terms.aleatoric[[i, j]] + beta * self.terms.epistemic[[i, j]];
                }
                softmax_into(&sigma, sharpness, &mut p);
                p[self.predicted[i]]
            })
            .collect()
    }

    fn ece(&self, alpha: f64, beta: f64, sharpness: f64) -> f64 {
        let conf = self.confidences(alpha, beta, sharpness);
        metrics::ece(&conf, self.correct, self.scheme).unwrap_or(f64::INFINITY)
    }
}

fn log_grid(low: f64, high: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![(low * high).sqrt()];
    }
    let (a, b) = (low.ln(), high.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Fits a model from the graph split (features, labels and the point
/// predictor's correctness on it) and the calibration split (features and
/// point predictions with correctness). Features are raw; `embedding` maps
/// them into the space where distances are measured.
pub fn fit(
    graph: &Dataset,
    graph_predictions: &PredictionSet,
    calibration: &Dataset,
    calibration_predictions: &PredictionSet,
    embedding: Embedding,
    cfg: &MacestConfig,
) -> Result<MacestModel> {
    cfg.validate()?;
    if calibration.is_empty() || calibration_predictions.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    if graph_predictions.len() != graph.len() {
        return Err(Error::LengthMismatch {
            left: graph.len(),
            right: graph_predictions.len(),
        });
    }
    if calibration_predictions.len() != calibration.len() {
        return Err(Error::LengthMismatch {
            left: calibration.len(),
            right: calibration_predictions.len(),
        });
    }
    let class_count = graph.class_count().max(calibration.class_count());
    if class_count < 2 {
        return Err(Error::InvalidArgument("MACEst needs at least 2 classes".into()));
    }
    if let Some(&bad) = calibration_predictions.predicted.iter().find(|&&p| p >= class_count) {
        return Err(Error::InvalidData(format!(
            "predicted class {bad} outside 0..{class_count}"
        )));
    }
    let graph_z = embedding.apply(graph.features())?;
    let incorrect: Vec<bool> = graph_predictions.correct()?.iter().map(|c| !c).collect();
    let classes = build_classes(graph_z.view(), graph.labels(), &incorrect, class_count, cfg)?;

    let mut model = MacestModel {
        alpha: cfg.alpha_init,
        beta: cfg.beta_init,
        sharpness: cfg.sharpness_init,
        k: cfg.k,
        d_min: cfg.d_min,
        class_count,
        classes,
        embedding,
        backend: cfg.backend,
        hnsw: cfg.hnsw,
        calibration_epistemic: Vec::new(),
        fitted_ece: f64::NAN,
        predictor: None,
    };

    let cal_z = model.embedding.apply(calibration.features())?;
    let terms = model.terms_embedded(cal_z.view())?;
    let objective = Objective {
        terms: &terms,
        predicted: &calibration_predictions.predicted,
        correct: calibration_predictions.correct()?,
        scheme: BinningScheme::equal_mass(cfg.bins),
    };
    let (alpha, beta, sharpness, ece) = optimize(&objective, cfg);
    model.alpha = alpha;
    model.beta = beta;
    model.sharpness = sharpness;
    model.fitted_ece = ece;
    model.calibration_epistemic = terms
        .epistemic
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    Ok(model)
}

/// Grid search over `(alpha, beta, sharpness)` followed by Nelder-Mead in log
/// space. Ties keep the first point in grid order, so the result is
/// deterministic.
fn optimize(objective: &Objective<'_>, cfg: &MacestConfig) -> (f64, f64, f64, f64) {
    let o = &cfg.optimizer;
    let mut best = (
        cfg.alpha_init,
        cfg.beta_init,
        cfg.sharpness_init,
        objective.ece(cfg.alpha_init, cfg.beta_init, cfg.sharpness_init),
    );
    let grid = log_grid(o.grid_low, o.grid_high, o.grid_points);
    let sharp_grid = log_grid(o.sharpness_low, o.sharpness_high, o.sharpness_points);
    for &a in &grid {
        for &b in &grid {
            for &s in &sharp_grid {
                let v = objective.ece(a, b, s);
                if v < best.3 {
                    best = (a, b, s, v);
                }
            }
        }
    }
    if o.refine_iterations == 0 {
        return best;
    }
    let lower = [o.grid_low.ln(), o.grid_low.ln(), o.sharpness_low.ln()];
    let upper = [o.grid_high.ln(), o.grid_high.ln(), o.sharpness_high.ln()];
    let start = [best.0.ln(), best.1.ln(), best.2.ln()];
    let opts = NelderMeadOptions {
        max_iter: o.refine_iterations,
        tolerance: o.tolerance,
        initial_step: 0.25,
    };
    let (x, v) = nelder_mead(
        |x| objective.ece(x[0].exp(), x[1].exp(), x[2].exp()),
        &start,
        &lower,
        &upper,
        opts,
    );
    if v < best.3 {
        (x[0].exp(), x[1].exp(), x[2].exp(), v)
    } else {
        best
    }
}
