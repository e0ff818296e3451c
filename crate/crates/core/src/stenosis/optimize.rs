//! Per-vessel fitting of the kernel widths: exhaustive log-uniform grid,
//! then bounded quasi-Newton refinement from the grid optimum. `kappa` is
//! fixed from the profile throughout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::peaks::{detect_peaks, PeakOptions, PeakSet};
use super::regression::{compute_kappa, regression_loss, RegressionParams};
use super::RadiusProfile;
use crate::error::{Error, Result};
use crate::optim::{central_gradient, minimize_bounded, LbfgsbOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub sigma_x: (f64, f64),
    pub sigma_max: (f64, f64),
    pub sigma_r: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            sigma_x: (10.0, 17.5),
            sigma_max: (3.67, 50.0),
            sigma_r: (0.25, 0.556),
        }
    }
}

impl ParamBounds {
    fn axes(&self) -> [(f64, f64); 3] {
        [self.sigma_x, self.sigma_max, self.sigma_r]
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in self.axes() {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "bounds must be finite, positive and ordered: {self:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &RegressionParams) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(p.sigma_x, self.sigma_x)
            && inside(p.sigma_max, self.sigma_max)
            && inside(p.sigma_r, self.sigma_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Grid points per axis.
    pub grid_points: usize,
    pub refine: bool,
    /// Finite-difference step as a fraction of each bound width.
    pub gradient_step: f64,
    pub peaks: PeakOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            grid_points: 8,
            refine: true,
            gradient_step: 1e-3,
            peaks: PeakOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: RegressionParams,
    pub loss: f64,
    pub grid_params: RegressionParams,
    pub grid_loss: f64,
    pub refined_loss: Option<f64>,
    pub peaks: PeakSet,
    /// Refinement met a non-finite loss and the grid optimum was kept.
    pub flagged: bool,
}

fn log_grid((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 || hi == lo {
        return vec![lo];
    }
    (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                lo * (hi / lo).powf(k as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

pub fn optimize_params(
    p: &RadiusProfile,
    bounds: &ParamBounds,
    opts: &OptimizeOptions,
) -> Result<FitResult> {
    bounds.validate()?;
    if opts.grid_points == 0 {
        return Err(Error::InvalidParams("grid needs at least one point per axis".into()));
    }
    let kappa = compute_kappa(p);
    let peaks = detect_peaks(p, &opts.peaks);
    let make = |v: [f64; 3]| RegressionParams {
        sigma_x: v[0],
        sigma_max: v[1],
        sigma_r: v[2],
        kappa,
    };
    let loss_of = |v: [f64; 3]| regression_loss(&make(v), p, &peaks.indices).unwrap_or(f64::NAN);

    let axes = bounds.axes();
    let gx = log_grid(axes[0], opts.grid_points);
    let gm = log_grid(axes[1], opts.grid_points);
    let gr = log_grid(axes[2], opts.grid_points);
    let mut grid = Vec::with_capacity(gx.len() * gm.len() * gr.len());
    for &a in &gx {
        for &b in &gm {
            for &c in &gr {
                grid.push([a, b, c]);
            }
        }
    }
    let losses: Vec<f64> = grid.par_iter().map(|&v| loss_of(v)).collect();
    // lexicographic grid order, so the first strict minimum wins ties
    let mut best: Option<(f64, [f64; 3])> = None;
    for (v, l) in grid.iter().zip(&losses) {
        if l.is_finite() && best.map_or(true, |(b, _)| *l < b) {
            best = Some((*l, *v));
        }
    }
    let Some((grid_loss, grid_best)) = best else {
        return Err(Error::InvalidInput("regression loss is not finite anywhere on the grid".into()));
    };

    let mut result = FitResult {
        params: make(grid_best),
        loss: grid_loss,
        grid_params: make(grid_best),
        grid_loss,
        refined_loss: None,
        peaks: peaks.clone(),
        flagged: false,
    };
    if !opts.refine {
        return Ok(result);
    }

    // refine in unit-box coordinates so every axis has comparable scale
    let to_param = |u: &[f64]| -> [f64; 3] {
        [0, 1, 2].map(|k| axes[k].0 + u[k].clamp(0.0, 1.0) * (axes[k].1 - axes[k].0))
    };
    let width = |k: usize| axes[k].1 - axes[k].0;
    let u0: Vec<f64> = (0..3)
        .map(|k| if width(k) > 0.0 { (grid_best[k] - axes[k].0) / width(k) } else { 0.0 })
        .collect();
    let objective = |u: &[f64]| loss_of(to_param(u));
    let lower = [0.0; 3];
    let upper: Vec<f64> = (0..3).map(|k| if width(k) > 0.0 { 1.0 } else { 0.0 }).collect();
    let step = [opts.gradient_step; 3];
    let m = minimize_bounded(
        &objective,
        |u: &[f64]| central_gradient(&objective, u, &step, &lower, &upper),
        &u0,
        &lower,
        &upper,
        &LbfgsbOptions::default(),
    );
    if m.non_finite || !m.f.is_finite() {
        result.flagged = true;
        return Ok(result);
    }
    result.refined_loss = Some(m.f);
    if m.f < grid_loss {
        result.params = make(to_param(&m.x));
        result.loss = m.f;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_spans_bounds() {
        let g = log_grid((3.67, 50.0), 8);
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], 3.67);
        assert_eq!(g[7], 50.0);
        let ratio = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-9);
        }
    }

    #[test]
    fn healthy_profile_gives_zero_loss() {
        let n = 200;
        let s: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let p = RadiusProfile::new(s, vec![1.8; n]).unwrap();
        let fit = optimize_params(&p, &ParamBounds::default(), &OptimizeOptions::default()).unwrap();
        assert!(fit.loss < 1e-6);
        assert!(ParamBounds::default().contains(&fit.params));
    }

    #[test]
    fn refinement_never_worse_than_grid() {
        let n = 160;
        let s: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let r: Vec<f64> = s
            .iter()
            .map(|x| {
                let ripple = 1.0 + 0.03 * (x / 9.0 * std::f64::consts::TAU).sin();
                let dip = 1.0 - 0.5 * (-(x - 40.0f64).powi(2) / 8.0).exp();
                2.0 * ripple * dip
            })
            .collect();
        let p = RadiusProfile::new(s, r).unwrap();
        let fit = optimize_params(&p, &ParamBounds::default(), &OptimizeOptions::default()).unwrap();
        assert!(fit.loss <= fit.grid_loss);
        assert!(ParamBounds::default().contains(&fit.params));
    }

    #[test]
    fn bad_bounds_are_rejected() {
        let s: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let p = RadiusProfile::new(s, vec![2.0; 10]).unwrap();
        let bounds = ParamBounds {
            sigma_x: (5.0, 1.0),
            ..ParamBounds::default()
        };
        assert!(optimize_params(&p, &bounds, &OptimizeOptions::default()).is_err());
    }
}
