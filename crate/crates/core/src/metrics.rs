//! Calibration and scoring metrics.
//!
//! Every metric here scores the confidence that a point prediction is
//! correct: the outcome for sample `i` is `correct[i]`, not a class label.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability clip used by [`nll`].
pub const NLL_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinKind {
    EqualWidth,
    /// Adaptive bins holding (near) equal numbers of samples.
    EqualMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningScheme {
    pub kind: BinKind,
    pub bins: usize,
}

impl Default for BinningScheme {
    fn default() -> Self {
        BinningScheme {
            kind: BinKind::EqualMass,
            bins: 10,
        }
    }
}

impl BinningScheme {
    pub fn equal_mass(bins: usize) -> Self {
        BinningScheme {
            kind: BinKind::EqualMass,
            bins,
        }
    }

    pub fn equal_width(bins: usize) -> Self {
        BinningScheme {
            kind: BinKind::EqualWidth,
            bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    /// Mean confidence of the bin.
    pub conf: f64,
    /// Fraction of correct predictions in the bin.
    pub acc: f64,
    pub count: usize,
}

/// Occupied bins only, in increasing confidence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityData {
    pub bins: Vec<ReliabilityBin>,
}

impl ReliabilityData {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Groups sample indices into `scheme.bins` bins (some may be empty).
///
/// Equal-mass bins cut the confidence-sorted samples into groups whose sizes
/// follow largest-remainder rounding, except that equal confidences always
/// share a bin. Equal-width bins split `[0, 1]`, the last bin closed.
pub fn bin(confidences: &[f64], scheme: BinningScheme) -> Result<Vec<Vec<usize>>> {
    if confidences.is_empty() {
        return Err(Error::Empty("confidences"));
    }
    if scheme.bins == 0 {
        return Err(Error::InvalidArgument("bin count must be positive".into()));
    }
    if let Some(bad) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidArgument(format!("confidence {bad} outside [0, 1]")));
    }
    let n = scheme.bins;
    let mut groups = vec![Vec::new(); n];
    match scheme.kind {
        BinKind::EqualWidth => {
            for (i, &c) in confidences.iter().enumerate() {
                let b = ((c * n as f64).floor() as usize).min(n - 1);
                groups[b].push(i);
            }
        }
        BinKind::EqualMass => {
            let mut order: Vec<usize> = (0..confidences.len()).collect();
            order.sort_by(|&a, &b| confidences[a].total_cmp(&confidences[b]).then(a.cmp(&b)));
            let total = order.len();
            let (base, extra) = (total / n, total % n);
            let mut bin_of_position = Vec::with_capacity(total);
            for b in 0..n {
                let size = base + usize::from(b < extra);
                bin_of_position.extend(std::iter::repeat_n(b, size));
            }
            let mut prev: Option<(f64, usize)> = None;
            for (pos, &i) in order.iter().enumerate() {
                let b = match prev {
                    Some((c, b)) if c == confidences[i] => b,
                    Some((_, b)) => bin_of_position[pos].max(b),
                    None => bin_of_position[pos],
                };
                groups[b].push(i);
                prev = Some((confidences[i], b));
            }
        }
    }
    Ok(groups)
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

pub fn reliability(confidences: &[f64], correct: &[bool], scheme: BinningScheme) -> Result<ReliabilityData> {
    check_lengths(confidences.len(), correct.len())?;
    let groups = bin(confidences, scheme)?;
    let bins = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let count = g.len();
            let conf = g.iter().map(|&i| confidences[i]).sum::<f64>() / count as f64;
            let acc = g.iter().filter(|&&i| correct[i]).count() as f64 / count as f64;
            ReliabilityBin { conf, acc, count }
        })
        .collect();
    Ok(ReliabilityData { bins })
}

/// Expected calibration error: `sum_b (|B_b| / N) |conf(B_b) - acc(B_b)|`.
pub fn ece(confidences: &[f64], correct: &[bool], scheme: BinningScheme) -> Result<f64> {
    let data = reliability(confidences, correct, scheme)?;
    let n = confidences.len() as f64;
    Ok(data
        .bins
        .iter()
        .map(|b| b.count as f64 / n * (b.conf - b.acc).abs())
        .sum())
}

/// Mean squared error between confidence and outcome.
pub fn brier(confidences: &[f64], correct: &[bool]) -> Result<f64> {
    check_lengths(confidences.len(), correct.len())?;
    if confidences.is_empty() {
        return Err(Error::Empty("confidences"));
    }
    let sum: f64 = confidences
        .iter()
        .zip(correct)
        .map(|(&p, &o)| (p - if o { 1.0 } else { 0.0 }).powi(2))
        .sum();
    Ok(sum / confidences.len() as f64)
}

/// Mean binary negative log-likelihood with `p` clipped to
/// `[1e-12, 1 - 1e-12]`.
pub fn nll(confidences: &[f64], correct: &[bool]) -> Result<f64> {
    check_lengths(confidences.len(), correct.len())?;
    if confidences.is_empty() {
        return Err(Error::Empty("confidences"));
    }
    let sum: f64 = confidences
        .iter()
        .zip(correct)
        .map(|(&p, &o)| {
            let p = p.clamp(NLL_CLIP, 1.0 - NLL_CLIP);
            if o {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / confidences.len() as f64)
}

/// Mid-ranks (1-based, ties averaged).
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = mid;
        }
        start = end;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of mid-ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs at least 2 samples".into()));
    }
    pearson(&ranks(a), &ranks(b)).ok_or(Error::ConstantInput("spearman input"))
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("ks sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// Fold mean with a half-width of twice the sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWithError {
    pub mean: f64,
    pub half_width: f64,
}

impl MetricWithError {
    pub fn low(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn high(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &MetricWithError) -> bool {
        self.low() <= other.high() && other.low() <= self.high()
    }
}

pub fn with_error_bars(per_fold: &[f64]) -> Result<MetricWithError> {
    let k = per_fold.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "error bars need at least 2 folds, got {k}"
        )));
    }
    let mean = per_fold.iter().sum::<f64>() / k as f64;
    let var = per_fold.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    Ok(MetricWithError {
        mean,
        half_width: 2.0 * var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ece,
    Brier,
    Nll,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Ece, Metric::Brier, Metric::Nll];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ece => "ece",
            Metric::Brier => "brier",
            Metric::Nll => "nll",
        }
    }

    pub fn evaluate(self, confidences: &[f64], correct: &[bool], scheme: BinningScheme) -> Result<f64> {
        match self {
            Metric::Ece => ece(confidences, correct, scheme),
            Metric::Brier => brier(confidences, correct),
            Metric::Nll => nll(confidences, correct),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ece" => Ok(Metric::Ece),
            "brier" => Ok(Metric::Brier),
            "nll" => Ok(Metric::Nll),
            other => Err(Error::InvalidArgument(format!("unknown metric '{other}'"))),
        }
    }
}
