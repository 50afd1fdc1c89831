//! Trust scores: how much closer a point sits to the predicted class than to
//! the nearest other class.
//!
//! A class's distance to `x` is the distance to its k-th nearest member.

use ndarray::{ArrayView1, ArrayView2, Axis};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::macest::MacestModel;
use crate::neighbour::{Backend, HnswParams, NeighbourIndex};

/// Floor on the predicted class's distance.
pub const TRUST_D_MIN: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct TrustScorer {
    indexes: Vec<NeighbourIndex>,
    /// Effective k per class, lowered for small classes.
    ks: Vec<usize>,
    k: usize,
}

impl TrustScorer {
    pub fn build(
        points: ArrayView2<'_, f64>,
        labels: &[usize],
        class_count: usize,
        k: usize,
        backend: Backend,
        params: HnswParams,
    ) -> Result<Self> {
        if labels.len() != points.nrows() {
            return Err(Error::LengthMismatch {
                left: points.nrows(),
                right: labels.len(),
            });
        }
        let per_class = (0..class_count)
            .map(|c| {
                let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
                points.select(Axis(0), &rows)
            })
            .collect();
        Self::from_class_points(per_class, k, backend, params)
    }

    pub fn from_dataset(d: &Dataset, k: usize, backend: Backend, params: HnswParams) -> Result<Self> {
        Self::build(d.features(), d.labels(), d.class_count(), k, backend, params)
    }

    /// Scorer over a fitted model's graph points, in its embedded space.
    pub fn from_model(m: &MacestModel, k: usize) -> Result<Self> {
        let per_class = (0..m.class_count()).map(|c| m.class_points(c).to_owned()).collect();
        Self::from_class_points(per_class, k, m.backend(), *m.hnsw_params())
    }

    fn from_class_points(
        per_class: Vec<ndarray::Array2<f64>>,
        k: usize,
        backend: Backend,
        params: HnswParams,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("trust score k must be at least 1".into()));
        }
        if per_class.len() < 2 {
            return Err(Error::InvalidData("trust scores need at least two classes".into()));
        }
        let mut indexes = Vec::with_capacity(per_class.len());
        let mut ks = Vec::with_capacity(per_class.len());
        for (c, pts) in per_class.into_iter().enumerate() {
            if pts.nrows() == 0 {
                return Err(Error::ClassTooSmall {
                    class: c,
                    available: 0,
                    required: 1,
                });
            }
            if pts.nrows() < k {
                log::warn!("trust: class {c} has {} rows; lowering k from {k}", pts.nrows());
            }
            ks.push(k.min(pts.nrows()));
            indexes.push(NeighbourIndex::build(pts.view(), backend, params)?);
        }
        Ok(TrustScorer { indexes, ks, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn class_count(&self) -> usize {
        self.indexes.len()
    }

    /// Distance from `x` to the k-th nearest member of `class`.
    pub fn class_distance(&self, x: ArrayView1<'_, f64>, class: usize) -> Result<f64> {
        let index = self
            .indexes
            .get(class)
            .ok_or_else(|| Error::InvalidData(format!("class {class} outside 0..{}", self.indexes.len())))?;
        let found = index.query(x, self.ks[class])?;
        Ok(*found.distances.last().expect("k >= 1"))
    }

    pub fn score(&self, x: ArrayView1<'_, f64>, predicted_class: usize) -> Result<f64> {
        let d_pred = self.class_distance(x, predicted_class)?;
        let mut d_other = f64::INFINITY;
        for c in (0..self.indexes.len()).filter(|&c| c != predicted_class) {
            d_other = d_other.min(self.class_distance(x, c)?);
        }
        Ok(d_other / d_pred.max(TRUST_D_MIN))
    }

    pub fn score_batch(&self, x: ArrayView2<'_, f64>, predicted: &[usize]) -> Result<Vec<f64>> {
        if predicted.len() != x.nrows() {
            return Err(Error::LengthMismatch {
                left: x.nrows(),
                right: predicted.len(),
            });
        }
        x.rows()
            .into_iter()
            .zip(predicted)
            .map(|(row, &c)| self.score(row, c))
            .collect()
    }
}

pub fn trust_score(t: &TrustScorer, x: ArrayView1<'_, f64>, predicted_class: usize) -> Result<f64> {
    t.score(x, predicted_class)
}
