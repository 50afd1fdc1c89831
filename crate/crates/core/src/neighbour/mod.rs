//! k-nearest-neighbour search under Euclidean distance.
//!
//! Two backends share one contract: an exact scan, which doubles as the
//! oracle, and an HNSW graph for large point sets. Ties in distance are
//! broken by ascending row id on both backends.

mod hnsw;

use std::cmp::Ordering;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hnsw::HnswGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Hnsw,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Backend::Exact),
            "hnsw" => Ok(Backend::Hnsw),
            other => Err(Error::InvalidArgument(format!("unknown backend '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Links per node on the upper layers; layer 0 allows twice as many.
    pub m_links: usize,
    pub ef_construction: usize,
    /// Search breadth; `None` means `max(64, 2k)` per query.
    pub ef_search: Option<usize>,
    /// Seed for level assignment.
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m_links: 16,
            ef_construction: 200,
            ef_search: None,
            seed: 0x5EED,
        }
    }
}

impl HnswParams {
    pub fn ef_for(&self, k: usize) -> usize {
        self.ef_search.unwrap_or_else(|| 64.max(2 * k)).max(k)
    }
}

/// The `k` nearest stored points, closest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighbourSet {
    pub ids: Vec<usize>,
    pub distances: Vec<f64>,
}

impl NeighbourSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Euclidean distance, summed in coordinate order.
#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

#[inline]
pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Searchable point set.
#[derive(Debug, Clone)]
pub struct NeighbourIndex {
    backend: Backend,
    dim: usize,
    /// Row-major `len x dim`.
    points: Vec<f64>,
    row_ids: Vec<usize>,
    params: HnswParams,
    graph: Option<HnswGraph>,
}

impl NeighbourIndex {
    /// Indexes `points`; row `i` gets id `i`.
    pub fn build(points: ArrayView2<'_, f64>, backend: Backend, params: HnswParams) -> Result<Self> {
        let ids = (0..points.nrows()).collect();
        Self::build_with_ids(points, ids, backend, params)
    }

    pub fn build_with_ids(
        points: ArrayView2<'_, f64>,
        row_ids: Vec<usize>,
        backend: Backend,
        params: HnswParams,
    ) -> Result<Self> {
        let (m, dim) = points.dim();
        if m == 0 {
            return Err(Error::Empty("neighbour index points"));
        }
        if row_ids.len() != m {
            return Err(Error::LengthMismatch {
                left: m,
                right: row_ids.len(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("neighbour index points"));
        }
        if backend == Backend::Hnsw && (params.m_links < 2 || params.ef_construction == 0) {
            return Err(Error::InvalidArgument(format!(
                "hnsw needs m_links >= 2 and ef_construction >= 1, got {} / {}",
                params.m_links, params.ef_construction
            )));
        }
        let flat: Vec<f64> = points.iter().copied().collect();
        let graph = match backend {
            Backend::Exact => None,
            Backend::Hnsw => Some(HnswGraph::build(&flat, dim, &params)),
        };
        Ok(NeighbourIndex {
            backend,
            dim,
            points: flat,
            row_ids,
            params,
            graph,
        })
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn query(&self, x: ArrayView1<'_, f64>, k: usize) -> Result<NeighbourSet> {
        match x.as_slice() {
            Some(s) => self.query_slice(s, k),
            None => self.query_slice(&x.to_vec(), k),
        }
    }

    pub fn query_slice(&self, x: &[f64], k: usize) -> Result<NeighbourSet> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if k == 0 || k > self.len() {
            return Err(Error::InvalidArgument(format!("k = {k} outside 1..={}", self.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query point"));
        }
        let mut hits: Vec<(f64, usize)> = match &self.graph {
            None => (0..self.len())
                .map(|i| (squared_euclidean(x, self.point(i)), i))
                .collect(),
            Some(g) => g.search(&self.points, self.dim, x, self.params.ef_for(k)),
        };
        let by_distance_then_id = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            a.0.total_cmp(&b.0)
                .then_with(|| self.row_ids[a.1].cmp(&self.row_ids[b.1]))
        };
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, by_distance_then_id);
            hits.truncate(k);
        }
        hits.sort_by(by_distance_then_id);
        Ok(NeighbourSet {
            ids: hits.iter().map(|&(_, i)| self.row_ids[i]).collect(),
            distances: hits.iter().map(|&(d, _)| d.sqrt()).collect(),
        })
    }
}

/// Mean fraction of the true `k` nearest ids that `approx` recovers.
pub fn recall_at_k(
    approx: &NeighbourIndex,
    exact: &NeighbourIndex,
    queries: ArrayView2<'_, f64>,
    k: usize,
) -> Result<f64> {
    if approx.dim != exact.dim || approx.points != exact.points || approx.row_ids != exact.row_ids {
        return Err(Error::InvalidArgument(
            "recall needs two indexes over the same points".into(),
        ));
    }
    if queries.nrows() == 0 {
        return Err(Error::Empty("recall queries"));
    }
    let mut total = 0.0;
    for q in queries.rows() {
        let truth = exact.query(q, k)?;
        let got = approx.query(q, k)?;
        let found = got.ids.iter().filter(|id| truth.ids.contains(id)).count();
        total += found as f64 / k as f64;
    }
    Ok(total / queries.nrows() as f64)
}
