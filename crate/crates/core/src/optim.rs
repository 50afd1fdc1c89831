//! Small derivative-free minimizers used when fitting calibration parameters.

/// Golden-section search for a minimum of a unimodal `f` on `[lo, hi]`.
/// Returns the best abscissa seen.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop once the spread of simplex values falls below this.
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 200,
            tolerance: 1e-6,
            initial_step: 0.25,
        }
    }
}

/// Nelder-Mead simplex minimization from `start`, with every trial point
/// clamped into `[lower, upper]` per coordinate. Returns `(argmin, min)`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: NelderMeadOptions,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let clamp = |x: &mut Vec<f64>| {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(lower[i], upper[i]);
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut x0 = start.to_vec();
    clamp(&mut x0);
    let f0 = f(&x0);
    simplex.push((x0.clone(), f0));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += opts.initial_step;
        if x[i] > upper[i] {
            x[i] = x0[i] - opts.initial_step;
        }
        clamp(&mut x);
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    for _ in 0..opts.max_iter {
        order(&mut simplex);
        if simplex[n].1 - simplex[0].1 <= opts.tolerance {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = (0..n)
                .map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j]))
                .collect();
            clamp(&mut x);
            x
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = entry.0.iter().zip(&best).map(|(v, b)| b + 0.5 * (v - b)).collect();
                    clamp(&mut x);
                    let fx = f(&x);
                    *entry = (x, fx);
                }
            }
        }
    }
    order(&mut simplex);
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(|x| (x - 0.7).powi(2), -3.0, 3.0, 1e-9, 200);
        assert!((x - 0.7).abs() < 1e-6);
    }

    #[test]
    fn nelder_mead_on_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_iter: 2000,
            tolerance: 1e-14,
            initial_step: 0.5,
        };
        let (x, v) = nelder_mead(f, &[-1.0, 1.0], &[-5.0, -5.0], &[5.0, 5.0], opts);
        assert!(v < 1e-8, "{v} at {x:?}");
    }

    #[test]
    fn nelder_mead_respects_bounds() {
        let (x, _) = nelder_mead(|x: &[f64]| -x[0], &[0.0], &[-1.0], &[2.0], NelderMeadOptions::default());
        assert!((x[0] - 2.0).abs() < 1e-9);
    }
}
