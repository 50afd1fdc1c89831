//! Labelled datasets: CSV ingestion, deterministic splits and folds, and the
//! synthetic generators used by the experiments.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Column holding external point predictions; never treated as a feature.
pub const PREDICTION_COLUMN: &str = "prediction";
/// Column holding optional raw prediction scores; never treated as a feature.
pub const SCORE_COLUMN: &str = "score";
pub const DEFAULT_LABEL_COLUMN: &str = "label";

/// Feature matrix plus integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    /// Builds a dataset, inferring the class count as `max(label) + 1`.
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let class_count = labels.iter().copied().max().map_or(0, |m| m + 1);
        Self::with_class_count(features, labels, class_count)
    }

    pub fn with_class_count(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 {
            return Err(Error::Empty("dataset rows"));
        }
        if d == 0 {
            return Err(Error::Empty("dataset feature columns"));
        }
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidData(format!(
                "label {bad} not below class count {class_count}"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        let dataset = Dataset {
            features,
            labels,
            class_count,
        };
        for class in dataset.empty_classes() {
            log::warn!("class {class} has no rows (class count {class_count})");
        }
        Ok(dataset)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Classes below `class_count` with no rows.
    pub fn empty_classes(&self) -> Vec<usize> {
        let counts = self.class_counts();
        (0..self.class_count).filter(|&c| counts[c] == 0).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows `rows` in the given order; keeps the parent's class count.
    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Dataset::with_class_count(features, labels, self.class_count)
    }

    /// Same labels, new features (e.g. after an embedding).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Dataset> {
        Dataset::with_class_count(features, self.labels.clone(), self.class_count)
    }

    pub fn into_parts(self) -> (Array2<f64>, Vec<usize>, usize) {
        (self.features, self.labels, self.class_count)
    }
}

/// Raw CSV contents: a header row and string cells.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(Error::EmptyFile(path.to_path_buf()));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            rows.push(record.iter().map(|c| c.trim().to_string()).collect());
        }
        if rows.is_empty() {
            return Err(Error::EmptyFile(path.to_path_buf()));
        }
        Ok(Table { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Parses column `name` as non-negative integers.
    pub fn integer_column(&self, name: &str) -> Result<Vec<usize>> {
        let col = self
            .column_index(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(row, cells)| {
                cells[col].parse::<usize>().map_err(|_| Error::InvalidLabel {
                    row,
                    value: cells[col].clone(),
                })
            })
            .collect()
    }

    /// Parses column `name` as finite floats.
    pub fn float_column(&self, name: &str) -> Result<Vec<f64>> {
        let col = self
            .column_index(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(row, cells)| parse_finite(&cells[col], row, name))
            .collect()
    }

    /// Every column except `exclude` (and the reserved prediction/score
    /// columns), in header order, as a numeric matrix.
    pub fn feature_matrix(&self, exclude: &[&str]) -> Result<(Vec<String>, Array2<f64>)> {
        let cols: Vec<usize> = (0..self.headers.len())
            .filter(|&i| {
                let h = self.headers[i].as_str();
                !exclude.contains(&h) && h != PREDICTION_COLUMN && h != SCORE_COLUMN
            })
            .collect();
        if cols.is_empty() {
            return Err(Error::Empty("feature columns"));
        }
        let mut data = Vec::with_capacity(self.rows.len() * cols.len());
        for (row, cells) in self.rows.iter().enumerate() {
            for &c in &cols {
                data.push(parse_finite(&cells[c], row, &self.headers[c])?);
            }
        }
        let names = cols.iter().map(|&c| self.headers[c].clone()).collect();
        let matrix =
            Array2::from_shape_vec((self.rows.len(), cols.len()), data).expect("shape matches collected cells");
        Ok((names, matrix))
    }
}

fn parse_finite(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumericCell {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

/// Loads a labelled dataset. Features are all other numeric columns in
/// header order; the reserved `prediction` and `score` columns are skipped.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let table = Table::read(path.as_ref())?;
    let labels = table.integer_column(label_column)?;
    let (_, features) = table.feature_matrix(&[label_column])?;
    Dataset::new(features, labels)
}

/// Writes `d` with feature columns `f0..f{D-1}` and the label column last.
/// Values are written with 17 significant digits so they parse back exactly.
pub fn save_csv(d: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut header: Vec<String> = (0..d.dim()).map(|j| format!("f{j}")).collect();
    header.push(label_column.to_string());
    let mut text = header.join(",");
    text.push('\n');
    for (i, row) in d.features.rows().into_iter().enumerate() {
        for v in row {
            text.push_str(&format!("{v:.16e},"));
        }
        text.push_str(&d.labels[i].to_string());
        text.push('\n');
    }
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// The predictor-train / graph / calibration / test partition.
#[derive(Debug, Clone)]
pub struct FourWaySplit {
    pub predictor_train: Dataset,
    pub graph: Dataset,
    pub calibration: Dataset,
    pub test: Dataset,
    /// Parent row ids of each part, in part order.
    pub rows: [Vec<usize>; 4],
}

pub const DEFAULT_SPLIT_FRACTIONS: [f64; 4] = [0.5, 0.2, 0.2, 0.1];

/// Part sizes by largest-remainder rounding; ties go to the earlier part.
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Shuffles row ids with `seed` and cuts them into parts sized by
/// `fractions`. Fractions must be positive and sum to 1 within 1e-9.
pub fn split_rows(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if fractions.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
        return Err(Error::InvalidArgument("split fractions must be positive".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions sum to {total}, expected 1"
        )));
    }
    let sizes = largest_remainder(n, fractions);
    if let Some(part) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArgument(format!(
            "split part {part} would be empty for {n} rows"
        )));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng::seeded(seed));
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        parts.push(ids[start..start + size].to_vec());
        start += size;
    }
    Ok(parts)
}

pub fn split_four(d: &Dataset, fractions: [f64; 4], seed: u64) -> Result<FourWaySplit> {
    let parts = split_rows(d.len(), &fractions, seed)?;
    let rows: [Vec<usize>; 4] = parts.try_into().expect("four parts");
    Ok(FourWaySplit {
        predictor_train: d.select(&rows[0])?,
        graph: d.select(&rows[1])?,
        calibration: d.select(&rows[2])?,
        test: d.select(&rows[3])?,
        rows,
    })
}

/// Assignment of each row to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// Row ids in fold `fold`, ascending.
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    /// Row ids outside fold `fold`, ascending.
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn kfold(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    kfold_rows(d.len(), k, seed)
}

pub fn kfold_rows(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("fold count {k} outside 2..={n}")));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng::seeded(seed));
    let mut assignments = vec![0; n];
    for (pos, &id) in ids.iter().enumerate() {
        assignments[id] = pos % k;
    }
    Ok(FoldPlan { k, assignments })
}

fn require_positive(name: &str, value: usize) -> Result<()> {
    if value == 0 {
        return Err(Error::InvalidArgument(format!("{name} must be positive")));
    }
    Ok(())
}

/// Isotropic unit-variance Gaussian blobs; class `c` is centred at
/// `separation * e_(c mod dim)`. Rows are grouped by class.
pub fn gen_blobs(n_per_class: usize, classes: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    require_positive("n_per_class", n_per_class)?;
    require_positive("classes", classes)?;
    require_positive("dim", dim)?;
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidArgument(
            "separation must be finite and non-negative".into(),
        ));
    }
    let mut rng = rng::seeded(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = n_per_class * classes;
    let mut features = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for i in 0..n_per_class {
            let r = c * n_per_class + i;
            for j in 0..dim {
                features[[r, j]] = normal.sample(&mut rng);
            }
            features[[r, c % dim]] += separation;
            labels.push(c);
        }
    }
    Dataset::with_class_count(features, labels, classes)
}

const SPIRAL_THETA_MIN: f64 = 0.5;
const SPIRAL_THETA_MAX: f64 = 0.5 + 4.0 * std::f64::consts::PI;

/// Point at angle `theta` on the Archimedean arm of `class` (0 or 1):
/// radius equals `theta`, and arm 1 is arm 0 rotated by half a turn.
pub fn spiral_arm(class: usize, theta: f64) -> [f64; 2] {
    let sign = if class == 0 { 1.0 } else { -1.0 };
    [sign * theta * theta.cos(), sign * theta * theta.sin()]
}

/// Two interleaved spiral arms in 2-D with Gaussian jitter.
pub fn gen_spiral(n_per_class: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    require_positive("n_per_class", n_per_class)?;
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidArgument("noise_sd must be >= 0".into()));
    }
    let mut rng = rng::seeded(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Array2::zeros((2 * n_per_class, 2));
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for class in 0..2 {
        for i in 0..n_per_class {
            let t = (i as f64 + 0.5) / n_per_class as f64;
            let theta = SPIRAL_THETA_MIN + (SPIRAL_THETA_MAX - SPIRAL_THETA_MIN) * t;
            let [x, y] = spiral_arm(class, theta);
            let r = class * n_per_class + i;
            features[[r, 0]] = x;
            features[[r, 1]] = y;
            if noise_sd > 0.0 {
                features[[r, 0]] += noise_sd * normal.sample(&mut rng);
                features[[r, 1]] += noise_sd * normal.sample(&mut rng);
            }
            labels.push(class);
        }
    }
    Dataset::with_class_count(features, labels, 2)
}

/// `n x dim` matrix of independent draws from `[low, high)`.
pub fn gen_uniform_noise(n: usize, dim: usize, low: f64, high: f64, seed: u64) -> Result<Array2<f64>> {
    gen_uniform_noise_in_box(n, &vec![low; dim], &vec![high; dim], seed)
}

/// Uniform noise with per-column bounds `[lows[j], highs[j])`.
pub fn gen_uniform_noise_in_box(n: usize, lows: &[f64], highs: &[f64], seed: u64) -> Result<Array2<f64>> {
    if lows.len() != highs.len() {
        return Err(Error::LengthMismatch {
            left: lows.len(),
            right: highs.len(),
        });
    }
    let dists = lows
        .iter()
        .zip(highs)
        .map(|(&lo, &hi)| {
            Uniform::new(lo, hi).map_err(|_| Error::InvalidArgument(format!("need low < high, got [{lo}, {hi})")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = rng::seeded(seed);
    let dim = lows.len();
    let mut out = Array2::zeros((n, dim));
    for i in 0..n {
        for (j, dist) in dists.iter().enumerate() {
            let v: f64 = dist.sample(&mut rng);
            // Guard the half-open bound against rounding in lo + u * (hi - lo).
            out[[i, j]] = if v >= highs[j] { lows[j] } else { v };
        }
    }
    Ok(out)
}

/// Adds independent `N(0, sd^2)` noise to every entry.
pub fn add_gaussian_noise(features: ArrayView2<'_, f64>, sd: f64, seed: u64) -> Result<Array2<f64>> {
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise sd must be finite and >= 0, got {sd}"
        )));
    }
    let mut out = features.to_owned();
    if sd == 0.0 {
        return Ok(out);
    }
    let mut rng = rng::seeded(seed);
    let normal = Normal::new(0.0, sd).expect("valid sd");
    out.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    Ok(out)
}

/// Column-wise `(min, max)` of a matrix.
pub fn column_ranges(x: ArrayView2<'_, f64>) -> (Vec<f64>, Vec<f64>) {
    let mut lows = vec![f64::INFINITY; x.ncols()];
    let mut highs = vec![f64::NEG_INFINITY; x.ncols()];
    for row in x.rows() {
        for (j, &v) in row.iter().enumerate() {
            lows[j] = lows[j].min(v);
            highs[j] = highs[j].max(v);
        }
    }
    (lows, highs)
}
