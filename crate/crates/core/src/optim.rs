//! Bound-constrained limited-memory quasi-Newton minimisation.
//!
//! Projected L-BFGS: the two-loop recursion runs on the free variables only
//! (those not pinned at a bound by an outward-pointing gradient), steps are
//! projected back into the box, and step lengths come from a projected
//! Armijo backtracking search.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsbOptions {
    /// Number of stored correction pairs.
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the projected gradient's infinity norm drops below this.
    pub pgtol: f64,
    /// Stop when the relative decrease of `f` drops below this.
    pub ftol: f64,
}

impl Default for LbfgsbOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 200,
            pgtol: 1e-8,
            ftol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    /// A non-finite objective or gradient was met; `x` is the last finite point.
    pub non_finite: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| (xi - (xi - gi).clamp(l, u)).abs())
        .fold(0.0, f64::max)
}

pub fn minimize_bounded<F, G>(
    f: F,
    grad: G,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &LbfgsbOptions,
) -> Minimum
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n, "bound dimensions");
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut fx = f(&x);
    let mut g = grad(&x);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum {
            x,
            f: fx,
            iterations: 0,
            converged: false,
            non_finite: true,
        };
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();

    for iter in 0..opts.max_iter {
        if projected_gradient_norm(&x, &g, lower, upper) < opts.pgtol {
            return Minimum {
                x,
                f: fx,
                iterations: iter,
                converged: true,
                non_finite: false,
            };
        }
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(&free)
                .map(|(vi, &fr)| if fr { *vi } else { 0.0 })
                .collect()
        };

        // two-loop recursion on the free subspace
        let mut q = mask(&g);
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        let mut rho = vec![0.0; m];
        for k in (0..m).rev() {
            let (s, y) = (mask(&s_hist[k]), mask(&y_hist[k]));
            let sy = dot(&s, &y);
            rho[k] = if sy > 0.0 { 1.0 / sy } else { 0.0 };
            alpha[k] = rho[k] * dot(&s, &q);
            for (qi, yi) in q.iter_mut().zip(&y) {
                *qi -= alpha[k] * yi;
            }
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let (s, y) = (mask(s), mask(y));
            let yy = dot(&y, &y);
            let sy = dot(&s, &y);
            if yy > 0.0 && sy > 0.0 {
                q.iter_mut().for_each(|v| *v *= sy / yy);
            }
        }
        for k in 0..m {
            let (s, y) = (mask(&s_hist[k]), mask(&y_hist[k]));
            let beta = rho[k] * dot(&y, &q);
            for (qi, si) in q.iter_mut().zip(&s) {
                *qi += (alpha[k] - beta) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&d, &g) >= 0.0 {
            d = mask(&g).iter().map(|v| -v).collect();
            s_hist.clear();
            y_hist.clear();
        }
        let dnorm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dnorm == 0.0 {
            return Minimum {
                x,
                f: fx,
                iterations: iter,
                converged: true,
                non_finite: false,
            };
        }

        // projected backtracking line search
        let mut step = if s_hist.is_empty() { (1.0 / dnorm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            project(&mut trial, lower, upper);
            let ft = f(&trial);
            let decrease: f64 = dot(&g, &trial.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>());
            if ft.is_finite() && ft <= fx + 1e-4 * decrease {
                accepted = Some((trial, ft));
                break;
            }
            if !ft.is_finite() && step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return Minimum {
                x,
                f: fx,
                iterations: iter,
                converged: false,
                non_finite: false,
            };
        };
        let g_new = grad(&x_new);
        if g_new.iter().any(|v| !v.is_finite()) {
            return Minimum {
                x: x_new,
                f: f_new,
                iterations: iter + 1,
                converged: false,
                non_finite: true,
            };
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let rel = (fx - f_new).abs() / fx.abs().max(f_new.abs()).max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if rel <= opts.ftol {
            return Minimum {
                x,
                f: fx,
                iterations: iter + 1,
                converged: true,
                non_finite: false,
            };
        }
    }
    Minimum {
        x,
        f: fx,
        iterations: opts.max_iter,
        converged: false,
        non_finite: false,
    }
}

/// Central-difference gradient with per-coordinate `step`, shrunk to
/// one-sided differences at the bounds.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let hi = (x[i] + step[i]).min(upper[i]);
            let lo = (x[i] - step[i]).max(lower[i]);
            if hi <= lo {
                return 0.0;
            }
            let mut xp = x.to_vec();
            xp[i] = hi;
            let mut xm = x.to_vec();
            xm[i] = lo;
            (f(&xp) - f(&xm)) / (hi - lo)
        })
        .collect()
}
