//! Feature embeddings that make Euclidean distance a sensible similarity:
//! per-column standardization and PCA (standardize first, then project).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column centring and scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Sample standard deviations; zero-variance columns get 1.
    pub sds: Vec<f64>,
}

pub fn fit_standardizer(x: ArrayView2<'_, f64>) -> Result<Standardizer> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "standardizer needs at least 2 rows, got {n}"
        )));
    }
    let means = column_means(x);
    let sds = (0..x.ncols())
        .map(|j| {
            let ss: f64 = x.column(j).iter().map(|v| (v - means[j]).powi(2)).sum();
            let sd = (ss / (n - 1) as f64).sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Ok(Standardizer { means, sds })
}

impl Standardizer {
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_dim(self.means.len(), x.ncols())?;
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.sds[j];
            }
        }
        Ok(out)
    }

    pub fn apply_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        check_dim(self.means.len(), x.len())?;
        Ok(Array1::from_iter(
            x.iter().enumerate().map(|(j, v)| (v - self.means[j]) / self.sds[j]),
        ))
    }
}

pub fn apply_standardizer(s: &Standardizer, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    s.apply(x)
}

/// Principal components of the sample covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `D x P`, orthonormal columns, sign-canonicalized so each column's
    /// largest-magnitude entry is positive.
    pub components: Array2<f64>,
    pub means: Vec<f64>,
    /// Non-increasing eigenvalues of the retained components.
    pub explained_variance: Vec<f64>,
}

const JACOBI_TOLERANCE: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 10_000;

pub fn fit_pca(x: ArrayView2<'_, f64>, p: usize) -> Result<PcaModel> {
    let (n, d) = x.dim();
    if n < 2 || p == 0 || p > (n - 1).min(d) {
        return Err(Error::InvalidArgument(format!(
            "component count {p} outside 1..={} for {n}x{d} data",
            n.saturating_sub(1).min(d)
        )));
    }
    let means = column_means(x);
    let mut centred = x.to_owned();
    for mut row in centred.rows_mut() {
        row.iter_mut().zip(&means).for_each(|(v, m)| *v -= m);
    }
    let cov = centred.t().dot(&centred) / (n - 1) as f64;
    let (values, vectors) = symmetric_eigen(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut components = Array2::zeros((d, p));
    let mut explained_variance = Vec::with_capacity(p);
    for (out_col, &src) in order.iter().take(p).enumerate() {
        let mut col = vectors.column(src).to_owned();
        let pivot = col
            .iter()
            .enumerate()
            .fold(
                (0, 0.0_f64),
                |best, (i, v)| {
                    if v.abs() > best.1 {
                        (i, v.abs())
                    } else {
                        best
                    }
                },
            )
            .0;
        if col[pivot] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
        components.column_mut(out_col).assign(&col);
        explained_variance.push(values[src].max(0.0));
    }
    Ok(PcaModel {
        components,
        means,
        explained_variance,
    })
}

impl PcaModel {
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_dim(self.means.len(), x.ncols())?;
        let mut centred = x.to_owned();
        for mut row in centred.rows_mut() {
            row.iter_mut().zip(&self.means).for_each(|(v, m)| *v -= m);
        }
        Ok(centred.dot(&self.components))
    }

    pub fn apply_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        check_dim(self.means.len(), x.len())?;
        let centred = Array1::from_iter(x.iter().zip(&self.means).map(|(v, m)| v - m));
        Ok(centred.dot(&self.components))
    }

    /// Maps projected coordinates back to the input space.
    pub fn reconstruct(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = z.dot(&self.components.t());
        for mut row in out.rows_mut() {
            row.iter_mut().zip(&self.means).for_each(|(v, m)| *v += m);
        }
        out
    }
}

pub fn apply_pca(m: &PcaModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    m.apply(x)
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues (unsorted) and the eigenvectors as columns.
fn symmetric_eigen(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let d = a.nrows();
    let mut v = Array2::<f64>::eye(d);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off.sqrt() <= JACOBI_TOLERANCE * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                // 0.0.signum() is 1, so theta == 0 gives t = 1
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..d).map(|i| a[[i, i]]).collect(), v)
}

fn column_means(x: ArrayView2<'_, f64>) -> Vec<f64> {
    x.mean_axis(Axis(0))
        .map(|m| m.to_vec())
        .unwrap_or_else(|| vec![0.0; x.ncols()])
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Which embedding to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "components")]
pub enum EmbeddingKind {
    None,
    Std,
    Pca(usize),
}

/// A fitted embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Embedding {
    Identity { dim: usize },
    Standardize(Standardizer),
    Pca { standardizer: Standardizer, pca: PcaModel },
}

impl Embedding {
    pub fn fit(kind: EmbeddingKind, x: ArrayView2<'_, f64>) -> Result<Embedding> {
        Ok(match kind {
            EmbeddingKind::None => Embedding::Identity { dim: x.ncols() },
            EmbeddingKind::Std => Embedding::Standardize(fit_standardizer(x)?),
            EmbeddingKind::Pca(p) => {
                let standardizer = fit_standardizer(x)?;
                let z = standardizer.apply(x)?;
                let pca = fit_pca(z.view(), p)?;
                Embedding::Pca { standardizer, pca }
            }
        })
    }

    pub fn kind(&self) -> EmbeddingKind {
        match self {
            Embedding::Identity { .. } => EmbeddingKind::None,
            Embedding::Standardize(_) => EmbeddingKind::Std,
            Embedding::Pca { pca, .. } => EmbeddingKind::Pca(pca.components.ncols()),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Embedding::Identity { dim } => *dim,
            Embedding::Standardize(s) => s.means.len(),
            Embedding::Pca { standardizer, .. } => standardizer.means.len(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Embedding::Identity { dim } => *dim,
            Embedding::Standardize(s) => s.means.len(),
            Embedding::Pca { pca, .. } => pca.components.ncols(),
        }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Embedding::Identity { dim } => {
                check_dim(*dim, x.ncols())?;
                Ok(x.to_owned())
            }
            Embedding::Standardize(s) => s.apply(x),
            Embedding::Pca { standardizer, pca } => pca.apply(standardizer.apply(x)?.view()),
        }
    }

    pub fn apply_row(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        match self {
            Embedding::Identity { dim } => {
                check_dim(*dim, x.len())?;
                Ok(x.to_owned())
            }
            Embedding::Standardize(s) => s.apply_row(x),
            Embedding::Pca { standardizer, pca } => pca.apply_row(standardizer.apply_row(x)?.view()),
        }
    }
}
