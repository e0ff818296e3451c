use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    /// L2 strength; the penalty is `l2 * |w|^2 / (2 n)`.
    pub l2: f64,
    pub max_iter: usize,
    /// Gradient infinity-norm at convergence.
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iter: 5000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: Array1<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn objective(x: &ArrayView2<f64>, y: &[f64], w: &Array1<f64>, b: f64, l2: f64) -> f64 {
    let n = y.len() as f64;
    let z = x.dot(w) + b;
    let data: f64 = z.iter().zip(y).map(|(&zi, &yi)| softplus(zi) - yi * zi).sum::<f64>() / n;
    data + l2 * w.dot(w) / (2.0 * n)
}

/// L2-regularised logistic regression by gradient descent with
/// backtracking. Intercept is not penalised.
pub fn fit_logistic(x: ArrayView2<f64>, y: &[u8], opts: &LogisticOptions) -> LogisticFit {
    let n = y.len() as f64;
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut w = Array1::zeros(x.ncols());
    let mut b = 0.0;
    let mut f = objective(&x, &yf, &w, b, opts.l2);
    let mut step = 1.0;
    for iter in 0..opts.max_iter {
        let z = x.dot(&w) + b;
        let resid: Array1<f64> = z.iter().zip(&yf).map(|(&zi, &yi)| sigmoid(zi) - yi).collect();
        let gw = x.t().dot(&resid) / n + &w * (opts.l2 / n);
        let gb = resid.sum() / n;
        let gmax = gw.iter().fold(gb.abs(), |m, v| m.max(v.abs()));
        if gmax < opts.tol {
            return LogisticFit {
                coef: w,
                intercept: b,
                iterations: iter,
                converged: true,
            };
        }
        let gnorm2 = gw.dot(&gw) + gb * gb;
        step *= 2.0;
        loop {
            let w_new = &w - &(&gw * step);
            let b_new = b - step * gb;
            let f_new = objective(&x, &yf, &w_new, b_new, opts.l2);
            if f_new <= f - 1e-4 * step * gnorm2 || step < 1e-12 {
                w = w_new;
                b = b_new;
                f = f_new;
                break;
            }
            step *= 0.5;
        }
    }
    LogisticFit {
        coef: w,
        intercept: b,
        iterations: opts.max_iter,
        converged: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeResult {
    /// Surviving features in their original column order.
    pub selected: Vec<String>,
    /// Dropped features, first dropped first.
    pub eliminated: Vec<String>,
    /// Some fit hit the iteration cap.
    pub flagged: bool,
}

/// Recursive feature elimination: refit, drop the feature with the
/// smallest absolute coefficient (the later column on exact ties), repeat
/// until `k` remain. `x` is expected to be z-scored.
pub fn rfe_select(
    x: &Array2<f64>,
    y: &[u8],
    names: &[String],
    k: usize,
    opts: &LogisticOptions,
) -> Result<RfeResult> {
    if names.len() != x.ncols() || y.len() != x.nrows() {
        return Err(Error::InvalidInput("feature matrix does not match names or labels".into()));
    }
    if k == 0 || k > names.len() {
        return Err(Error::InvalidParams(format!(
            "cannot select {k} of {} features",
            names.len()
        )));
    }
    let mut active: Vec<usize> = (0..names.len()).collect();
    let mut eliminated = Vec::new();
    let mut flagged = false;
    while active.len() > k {
        let sub = x.select(Axis(1), &active);
        let fit = fit_logistic(sub.view(), y, opts);
        flagged |= !fit.converged;
        let mut drop = 0;
        for j in 1..active.len() {
            if fit.coef[j].abs() <= fit.coef[drop].abs() {
                drop = j;
            }
        }
        eliminated.push(names[active[drop]].clone());
        active.remove(drop);
    }
    if flagged {
        log::warn!("logistic regression hit the iteration cap during feature elimination");
    }
    Ok(RfeResult {
        selected: active.iter().map(|&i| names[i].clone()).collect(),
        eliminated,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn recovers_sign_pattern_of_noiseless_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = [1.5, -2.0, 0.7];
        let n = 300;
        let x = Array2::from_shape_fn((n, 3), |_| StandardNormal.sample(&mut rng));
        let y: Vec<u8> = (0..n)
            .map(|i| u8::from((0..3).map(|j| truth[j] * x[(i, j)]).sum::<f64>() > 0.0))
            .collect();
        let fit = fit_logistic(x.view(), &y, &LogisticOptions::default());
        for j in 0..3 {
            assert_eq!(fit.coef[j].signum(), f64::signum(truth[j]));
        }
    }

    #[test]
    fn gradient_vanishes_at_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 80;
        let x = Array2::from_shape_fn((n, 2), |_| StandardNormal.sample(&mut rng));
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
        let opts = LogisticOptions::default();
        let fit = fit_logistic(x.view(), &y, &opts);
        assert!(fit.converged);
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        // finite-difference check of stationarity
        let h = 1e-6;
        for j in 0..2 {
            let mut wp = fit.coef.clone();
            wp[j] += h;
            let mut wm = fit.coef.clone();
            wm[j] -= h;
            let g = (objective(&x.view(), &yf, &wp, fit.intercept, 1.0)
                - objective(&x.view(), &yf, &wm, fit.intercept, 1.0))
                / (2.0 * h);
            assert!(g.abs() < 1e-5, "{g}");
        }
    }

    #[test]
    fn selecting_everything_is_identity() {
        let x = Array2::from_shape_fn((20, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y: Vec<u8> = (0..20).map(|i| u8::from(i % 3 == 0)).collect();
        let r = rfe_select(&x, &y, &names(4), 4, &LogisticOptions::default()).unwrap();
        assert_eq!(r.selected, names(4));
        assert!(r.eliminated.is_empty());
    }

    #[test]
    fn duplicate_column_is_thinned_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400;
        // f0 and f1 identical and informative, f2 informative, f3..f5 noise
        let mut x = Array2::zeros((n, 6));
        let mut y = vec![0u8; n];
        for i in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            x[(i, 0)] = a;
            x[(i, 1)] = a;
            x[(i, 2)] = b;
            for j in 3..6 {
                x[(i, j)] = StandardNormal.sample(&mut rng);
            }
            let noise: f64 = StandardNormal.sample(&mut rng);
            y[i] = u8::from(2.0 * a + 2.0 * b + 0.3 * noise > 0.0);
        }
        let r = rfe_select(&x, &y, &names(6), 2, &LogisticOptions::default()).unwrap();
        assert_eq!(r.selected, vec!["f0".to_string(), "f2".to_string()]);
    }

    #[test]
    fn signal_feature_survives() {
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 120;
            let x = Array2::from_shape_fn((n, 12), |_| StandardNormal.sample(&mut rng));
            let y: Vec<u8> = (0..n)
                .map(|i| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    u8::from(x[(i, 4)] + 0.5 * e > 0.0)
                })
                .collect();
            let r = rfe_select(&x, &y, &names(12), 7, &LogisticOptions::default()).unwrap();
            hits += usize::from(r.selected.contains(&"f4".to_string()));
        }
        assert!(hits >= 95, "{hits}/100");
    }
}
