//! Baseline calibrators that rescale a point predictor's raw scores.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::NLL_CLIP;
use crate::optim::golden_section;

fn check_lengths(scores: usize, outcomes: usize) -> Result<()> {
    if scores != outcomes {
        return Err(Error::LengthMismatch {
            left: scores,
            right: outcomes,
        });
    }
    if scores == 0 {
        return Err(Error::Empty("calibration scores"));
    }
    Ok(())
}

fn check_unit_scores(scores: &[f64]) -> Result<()> {
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidData(format!("score {bad} outside [0, 1]")));
    }
    Ok(())
}

/// `p = 1 / (1 + exp(A·s + B))`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattModel {
    pub a: f64,
    pub b: f64,
}

impl PlattModel {
    pub fn apply(&self, s: f64) -> f64 {
        let z = self.a * s + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

/// Negative log-likelihood of targets `t` under `p = 1/(1+exp(z))`, `z = A·s+B`.
fn platt_objective(scores: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&s, &t)| {
            let z = a * s + b;
            // log(1 + e^z) - (1 - t)·z, written to avoid overflow
            if z >= 0.0 {
                t * z + (-z).exp().ln_1p()
            } else {
                (t - 1.0) * z + z.exp().ln_1p()
            }
        })
        .sum()
}

/// Fits Platt scaling with smoothed targets by damped Newton iterations.
///
/// Single-outcome data yields a constant model at the smoothed target rate.
pub fn fit_platt(scores: &[f64], correct: &[bool]) -> Result<PlattModel> {
    check_lengths(scores.len(), correct.len())?;
    check_unit_scores(scores)?;
    let pos = correct.iter().filter(|&&c| c).count() as f64;
    let neg = correct.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    if pos == 0.0 || neg == 0.0 {
        let p = if neg == 0.0 { hi } else { lo };
        log::warn!("platt scaling fitted on single-outcome data; using constant {p:.4}");
        return Ok(PlattModel {
            a: 0.0,
            b: ((1.0 - p) / p).ln(),
        });
    }
    let targets: Vec<f64> = correct.iter().map(|&c| if c { hi } else { lo }).collect();
    let (mut a, mut b) = (0.0, ((neg + 1.0) / (pos + 1.0)).ln());
    let mut f = platt_objective(scores, &targets, a, b);
    const RIDGE: f64 = 1e-12;
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (RIDGE, RIDGE, 0.0, 0.0, 0.0);
        for (&s, &t) in scores.iter().zip(&targets) {
            let p = PlattModel { a, b }.apply(s);
            let w = p * (1.0 - p);
            h11 += s * s * w;
            h22 += w;
            h21 += s * w;
            let d = t - p;
            g1 += s * d;
            g2 += d;
        }
        if g1.abs() < 1e-10 && g2.abs() < 1e-10 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let slope = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = platt_objective(scores, &targets, na, nb);
            if nf < f + 1e-4 * step * slope {
                (a, b, f) = (na, nb, nf);
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    Ok(PlattModel { a, b })
}

pub fn apply_platt(m: &PlattModel, s: f64) -> f64 {
    m.apply(s)
}

/// Non-decreasing step function: `values[i]` holds on
/// `[breakpoints[i], breakpoints[i + 1])`, with constant extrapolation past
/// either end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicModel {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsotonicModel {
    pub fn apply(&self, s: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b <= s);
        self.values[i.saturating_sub(1)]
    }
}

/// Weighted pool-adjacent-violators: the non-decreasing sequence minimizing
/// `Σ wᵢ (fᵢ − yᵢ)²`.
pub fn pav(y: &[f64], w: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&v, &wt) in y.iter().zip(w) {
        blocks.push((v, wt, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let wsum = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / wsum, wsum, n1 + n2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// Isotonic fit of real-valued targets against scores. Tied scores are pooled
/// first so the result does not depend on their order.
pub fn fit_isotonic_targets(scores: &[f64], targets: &[f64]) -> Result<IsotonicModel> {
    check_lengths(scores.len(), targets.len())?;
    if scores.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("isotonic inputs"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut breakpoints = Vec::new();
    let mut sums = Vec::new();
    let mut weights = Vec::new();
    for &i in &order {
        if breakpoints.last() == Some(&scores[i]) {
            *sums.last_mut().expect("non-empty") += targets[i];
            *weights.last_mut().expect("non-empty") += 1.0;
        } else {
            breakpoints.push(scores[i]);
            sums.push(targets[i]);
            weights.push(1.0);
        }
    }
    let means: Vec<f64> = sums.iter().zip(&weights).map(|(s, w)| s / w).collect();
    Ok(IsotonicModel {
        breakpoints,
        values: pav(&means, &weights),
    })
}

pub fn fit_isotonic(scores: &[f64], correct: &[bool]) -> Result<IsotonicModel> {
    let targets: Vec<f64> = correct.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
    fit_isotonic_targets(scores, &targets)
}

pub fn apply_isotonic(m: &IsotonicModel, s: f64) -> f64 {
    m.apply(s)
}

/// Floor applied to class scores before exponentiation, so zero vote
/// fractions stay finite under any temperature.
pub const TEMPERATURE_SCORE_FLOOR: f64 = 1e-12;

/// Temperature scaling on per-class score vectors: `p_c ∝ s_c^(1/T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub t: f64,
}

impl TemperatureModel {
    pub fn apply(&self, scores: ArrayView1<'_, f64>) -> Vec<f64> {
        let inv = 1.0 / self.t;
        let logs: Vec<f64> = scores
            .iter()
            .map(|&s| inv * s.max(TEMPERATURE_SCORE_FLOOR).ln())
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    pub fn apply_batch(&self, scores: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros(scores.raw_dim());
        for (i, row) in scores.rows().into_iter().enumerate() {
            for (c, p) in self.apply(row).into_iter().enumerate() {
                out[[i, c]] = p;
            }
        }
        out
    }
}

fn temperature_nll(m: &TemperatureModel, scores: ArrayView2<'_, f64>, predicted: &[usize], correct: &[bool]) -> f64 {
    let mut total = 0.0;
    for ((row, &c), &ok) in scores.rows().into_iter().zip(predicted).zip(correct) {
        let p = m.apply(row)[c].clamp(NLL_CLIP, 1.0 - NLL_CLIP);
        total -= if ok { p.ln() } else { (1.0 - p).ln() };
    }
    total / correct.len() as f64
}

/// Fits `T` by golden-section search on `log T ∈ [−3, 3]`, minimizing the
/// NLL of the predicted class's probability against correctness.
pub fn fit_temperature(scores: ArrayView2<'_, f64>, predicted: &[usize], correct: &[bool]) -> Result<TemperatureModel> {
    check_lengths(scores.nrows(), correct.len())?;
    check_lengths(predicted.len(), correct.len())?;
    if scores.iter().any(|&s| !s.is_finite() || s < 0.0) {
        return Err(Error::InvalidData(
            "class scores must be finite and non-negative".into(),
        ));
    }
    if let Some(bad) = predicted.iter().find(|&&c| c >= scores.ncols()) {
        return Err(Error::InvalidData(format!(
            "predicted class {bad} outside 0..{}",
            scores.ncols()
        )));
    }
    let uniform = scores.rows().into_iter().all(|row| {
        let first = row[0].max(TEMPERATURE_SCORE_FLOOR);
        row.iter().all(|&s| s.max(TEMPERATURE_SCORE_FLOOR) == first)
    });
    if uniform {
        return Err(Error::ConstantInput(
            "temperature scaling needs non-uniform score vectors",
        ));
    }
    let log_t = golden_section(
        |lt| temperature_nll(&TemperatureModel { t: lt.exp() }, scores, predicted, correct),
        -3.0,
        3.0,
        1e-6,
        200,
    );
    Ok(TemperatureModel { t: log_t.exp() })
}

pub fn apply_temperature(m: &TemperatureModel, scores: ArrayView1<'_, f64>) -> Vec<f64> {
    m.apply(scores)
}
