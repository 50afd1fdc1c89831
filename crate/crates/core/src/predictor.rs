//! Point predictions: a built-in k-nearest-neighbour majority-vote classifier
//! and ingestion of predictions made by any external model.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Table, PREDICTION_COLUMN, SCORE_COLUMN};
use crate::error::{Error, Result};
use crate::neighbour::{Backend, HnswParams, NeighbourIndex};

/// Predicted labels with their raw (uncalibrated) scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub predicted: Vec<usize>,
    /// Raw score of the predicted class, in `[0, 1]`.
    pub scores: Vec<f64>,
    /// Per-class raw scores (`N x C`), when the predictor provides them.
    pub class_scores: Option<Array2<f64>>,
    /// `correct[i]` is true iff `predicted[i]` equals the true label.
    pub correct: Option<Vec<bool>>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    /// Attaches correctness flags computed against `labels`.
    pub fn with_truth(mut self, labels: &[usize]) -> Result<Self> {
        if labels.len() != self.predicted.len() {
            return Err(Error::LengthMismatch {
                left: self.predicted.len(),
                right: labels.len(),
            });
        }
        self.correct = Some(self.predicted.iter().zip(labels).map(|(p, y)| p == y).collect());
        Ok(self)
    }

    pub fn correct(&self) -> Result<&[bool]> {
        self.correct
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("predictions carry no correctness flags".into()))
    }

    /// The predictions for `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> Result<PredictionSet> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::InvalidArgument(format!("row {bad} outside 0..{}", self.len())));
        }
        Ok(PredictionSet {
            predicted: rows.iter().map(|&r| self.predicted[r]).collect(),
            scores: rows.iter().map(|&r| self.scores[r]).collect(),
            class_scores: self.class_scores.as_ref().map(|m| m.select(ndarray::Axis(0), rows)),
            correct: self.correct.as_ref().map(|c| rows.iter().map(|&r| c[r]).collect()),
        })
    }

    /// Fraction of correct predictions.
    pub fn accuracy(&self) -> Option<f64> {
        let c = self.correct.as_ref()?;
        if c.is_empty() {
            return None;
        }
        Some(c.iter().filter(|&&v| v).count() as f64 / c.len() as f64)
    }
}

/// Majority vote over the `vote_k` nearest training points. Vote ties go to
/// the lowest class id.
#[derive(Debug, Clone)]
pub struct KnnClassifier {
    index: NeighbourIndex,
    labels: Vec<usize>,
    class_count: usize,
    vote_k: usize,
}

pub const DEFAULT_VOTE_K: usize = 10;

pub fn fit_classifier(train: &Dataset, vote_k: usize) -> Result<KnnClassifier> {
    KnnClassifier::fit(train, vote_k, Backend::Exact, HnswParams::default())
}

impl KnnClassifier {
    pub fn fit(train: &Dataset, vote_k: usize, backend: Backend, params: HnswParams) -> Result<Self> {
        Self::from_parts(
            train.features(),
            train.labels().to_vec(),
            train.class_count(),
            vote_k,
            backend,
            params,
        )
    }

    pub fn from_parts(
        points: ArrayView2<'_, f64>,
        labels: Vec<usize>,
        class_count: usize,
        vote_k: usize,
        backend: Backend,
        params: HnswParams,
    ) -> Result<Self> {
        if vote_k == 0 || vote_k > labels.len() {
            return Err(Error::InvalidArgument(format!(
                "vote_k = {vote_k} outside 1..={}",
                labels.len()
            )));
        }
        let index = NeighbourIndex::build(points, backend, params)?;
        Ok(KnnClassifier {
            index,
            labels,
            class_count,
            vote_k,
        })
    }

    pub fn vote_k(&self) -> usize {
        self.vote_k
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn index(&self) -> &NeighbourIndex {
        &self.index
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<PredictionSet> {
        if x.ncols() != self.index.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.index.dim(),
                got: x.ncols(),
            });
        }
        let n = x.nrows();
        let mut predicted = Vec::with_capacity(n);
        let mut scores = Vec::with_capacity(n);
        let mut class_scores = Array2::zeros((n, self.class_count));
        for (i, row) in x.rows().into_iter().enumerate() {
            let nbrs = self.index.query(row, self.vote_k)?;
            let mut votes = vec![0usize; self.class_count];
            for &id in &nbrs.ids {
                votes[self.labels[id]] += 1;
            }
            // max_by_key keeps the last maximum; iterate in reverse so the
            // lowest class id wins ties.
            let (best, &count) = votes
                .iter()
                .enumerate()
                .rev()
                .max_by_key(|&(_, v)| *v)
                .expect("at least one class");
            predicted.push(best);
            scores.push(count as f64 / self.vote_k as f64);
            for (c, &v) in votes.iter().enumerate() {
                class_scores[[i, c]] = v as f64 / self.vote_k as f64;
            }
        }
        Ok(PredictionSet {
            predicted,
            scores,
            class_scores: Some(class_scores),
            correct: None,
        })
    }

    /// Predicts `d` and attaches correctness against its labels.
    pub fn predict_labelled(&self, d: &Dataset) -> Result<PredictionSet> {
        self.predict(d.features())?.with_truth(d.labels())
    }
}

pub fn predict(c: &KnnClassifier, x: ArrayView2<'_, f64>) -> Result<PredictionSet> {
    c.predict(x)
}

/// Reads a `prediction` column (and optional `score` column) for the rows of
/// `d`. Missing scores default to 1.
pub fn load_external_predictions(path: impl AsRef<Path>, d: &Dataset) -> Result<PredictionSet> {
    let table = Table::read(path.as_ref())?;
    predictions_from_table(&table, d.class_count(), Some(d.labels()))
}

/// Predictions from a table; `labels`, when given, must match row for row.
pub fn predictions_from_table(table: &Table, class_count: usize, labels: Option<&[usize]>) -> Result<PredictionSet> {
    let predicted = table.integer_column(PREDICTION_COLUMN)?;
    if let Some(labels) = labels {
        if labels.len() != predicted.len() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: predicted.len(),
            });
        }
    }
    if let Some(bad) = predicted.iter().find(|&&p| p >= class_count) {
        return Err(Error::InvalidData(format!(
            "predicted class {bad} outside 0..{class_count}"
        )));
    }
    let scores = match table.column_index(SCORE_COLUMN) {
        Some(_) => {
            let s = table.float_column(SCORE_COLUMN)?;
            if let Some(bad) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidData(format!("score {bad} outside [0, 1]")));
            }
            s
        }
        None => vec![1.0; predicted.len()],
    };
    let set = PredictionSet {
        predicted,
        scores,
        class_scores: None,
        correct: None,
    };
    match labels {
        Some(l) => set.with_truth(l),
        None => Ok(set),
    }
}
