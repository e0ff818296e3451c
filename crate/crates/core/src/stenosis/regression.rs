//! Robust weighted Gaussian kernel regression of the radius profile.
//!
//! For point `i`, the healthy radius is the kernel-weighted mean of the
//! observed radii, where each radius is additionally weighted by its
//! Gaussian likelihood around a smoothed, upward-shifted reference radius:
//!
//! ```text
//! r_max[i] = sum_j N(j | i, sigma_max) r[j] / sum_j N(j | i, sigma_max) + kappa
//! w[i]     = N(r[i] | r_max[i], sigma_r)
//! r_h[i]   = sum_j N(j | i, sigma_x) w[j] r[j] / sum_j N(j | i, sigma_x) w[j]
//! ```
//!
//! Kernel distances are point-index differences. All sums run over the
//! whole profile.

use serde::{Deserialize, Serialize};

use super::peaks::{local_maxima, prominences};
use super::RadiusProfile;
use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian density `N(x | mean, sigma)`.
pub fn normal_density(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    INV_SQRT_2PI / sigma * (-0.5 * z * z).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionParams {
    /// Index-space width of the healthy-radius kernel.
    pub sigma_x: f64,
    /// Index-space width of the reference smoothing kernel.
    pub sigma_max: f64,
    /// Radius-space width of the robustness weights, mm.
    pub sigma_r: f64,
    /// Upward correction of the reference radius, mm.
    pub kappa: f64,
}

impl RegressionParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.sigma_x) && ok(self.sigma_max) && ok(self.sigma_r)) {
            return Err(Error::InvalidParams(format!(
                "kernel widths must be positive and finite: {self:?}"
            )));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "kappa must be non-negative: {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionIntermediates {
    pub r_max: Vec<f64>,
    pub w: Vec<f64>,
    pub r_h: Vec<f64>,
    /// Points where every weight underflowed and plain Gaussian smoothing
    /// stood in.
    pub fallback: Vec<usize>,
}

impl RegressionIntermediates {
    pub fn flagged(&self) -> bool {
        !self.fallback.is_empty()
    }
}

/// Half the sum of the largest dip prominence and the radius range.
pub fn compute_kappa(p: &RadiusProfile) -> f64 {
    let r = p.radius();
    let (lo, hi) = r
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let inverted: Vec<f64> = r.iter().map(|v| -v).collect();
    let dips = local_maxima(&inverted);
    let max_prom = prominences(&inverted, &dips)
        .into_iter()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    match max_prom {
        Some(prom) => 0.5 * (prom + range),
        None => 0.5 * range,
    }
}

/// `exp(-d^2 / (2 sigma^2))` for every index offset `d` in `0..n`.
fn kernel_table(n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|d| {
            let d = d as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

fn smooth_at(r: &[f64], table: &[f64], i: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (j, rj) in r.iter().enumerate() {
        let k = table[i.abs_diff(j)];
        num += k * rj;
        den += k;
    }
    num / den
}

/// Reference radii and robustness weights for every point.
fn reference_and_weights(r: &[f64], params: &RegressionParams) -> (Vec<f64>, Vec<f64>) {
    let table = kernel_table(r.len(), params.sigma_max);
    let r_max: Vec<f64> = (0..r.len())
        .map(|i| smooth_at(r, &table, i) + params.kappa)
        .collect();
    let w = r
        .iter()
        .zip(&r_max)
        .map(|(&ri, &mi)| normal_density(ri, mi, params.sigma_r))
        .collect();
    (r_max, w)
}

/// Healthy radius at `i`, or `None` when the weighted denominator vanishes.
fn weighted_at(r: &[f64], w: &[f64], table: &[f64], i: usize) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..r.len() {
        let k = table[i.abs_diff(j)] * w[j];
        num += k * r[j];
        den += k;
    }
    let v = num / den;
    (den > 0.0 && v.is_finite()).then_some(v)
}

pub fn healthy_radius(p: &RadiusProfile, params: &RegressionParams) -> Result<RegressionIntermediates> {
    params.validate()?;
    let r = p.radius();
    let (r_max, w) = reference_and_weights(r, params);
    let table = kernel_table(r.len(), params.sigma_x);
    let mut fallback = Vec::new();
    let r_h = (0..r.len())
        .map(|i| {
            weighted_at(r, &w, &table, i).unwrap_or_else(|| {
                fallback.push(i);
                smooth_at(r, &table, i)
            })
        })
        .collect();
    Ok(RegressionIntermediates {
        r_max,
        w,
        r_h,
        fallback,
    })
}

/// Healthy radius at the given indices only.
pub fn healthy_radius_at(
    p: &RadiusProfile,
    params: &RegressionParams,
    indices: &[usize],
) -> Result<Vec<f64>> {
    params.validate()?;
    let r = p.radius();
    let (_, w) = reference_and_weights(r, params);
    let table = kernel_table(r.len(), params.sigma_x);
    Ok(indices
        .iter()
        .map(|&i| weighted_at(r, &w, &table, i).unwrap_or_else(|| smooth_at(r, &table, i)))
        .collect())
}

/// Per-point stenosis degree `1 - r / r_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StenosisProfile {
    pub sd: Vec<f64>,
}

impl StenosisProfile {
    pub fn len(&self) -> usize {
        self.sd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sd.is_empty()
    }
}

pub fn stenosis_degree(p: &RadiusProfile, r_h: &[f64]) -> Result<StenosisProfile> {
    if r_h.len() != p.len() {
        return Err(Error::InvalidInput(format!(
            "healthy radius has {} points, profile {}",
            r_h.len(),
            p.len()
        )));
    }
    if let Some(i) = r_h.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "healthy radius at point {i} is not positive"
        )));
    }
    Ok(StenosisProfile {
        sd: p.radius().iter().zip(r_h).map(|(r, h)| 1.0 - r / h).collect(),
    })
}

/// Mean squared error between healthy and observed radius over `peaks`.
pub fn regression_loss(params: &RegressionParams, p: &RadiusProfile, peaks: &[usize]) -> Result<f64> {
    if peaks.is_empty() {
        return Err(Error::InvalidInput("regression loss needs at least one peak".into()));
    }
    let r_h = healthy_radius_at(p, params, peaks)?;
    let r = p.radius();
    let sum: f64 = peaks
        .iter()
        .zip(&r_h)
        .map(|(&i, h)| (h - r[i]) * (h - r[i]))
        .sum();
    Ok(sum / peaks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn profile(r: Vec<f64>) -> RadiusProfile {
        let s = (0..r.len()).map(|i| i as f64 * 0.5).collect();
        RadiusProfile::new(s, r).unwrap()
    }

    fn params(sigma_x: f64, sigma_max: f64, sigma_r: f64, kappa: f64) -> RegressionParams {
        RegressionParams {
            sigma_x,
            sigma_max,
            sigma_r,
            kappa,
        }
    }

    /// Literal double-loop evaluation with the normalised densities kept.
    fn naive(r: &[f64], p: &RegressionParams) -> Vec<f64> {
        let n = r.len();
        let dens = |x: f64, m: f64, s: f64| {
            (1.0 / (s * (2.0 * std::f64::consts::PI).sqrt())) * (-(x - m).powi(2) / (2.0 * s * s)).exp()
        };
        let mut r_max = vec![0.0; n];
        for i in 0..n {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..n {
                let k = dens(j as f64, i as f64, p.sigma_max);
                num += k * r[j];
                den += k;
            }
            r_max[i] = num / den + p.kappa;
        }
        let w: Vec<f64> = (0..n).map(|i| dens(r[i], r_max[i], p.sigma_r)).collect();
        (0..n)
            .map(|i| {
                let mut num = 0.0;
                let mut den = 0.0;
                for j in 0..n {
                    let k = dens(j as f64, i as f64, p.sigma_x);
                    num += k * w[j] * r[j];
                    den += k * w[j];
                }
                num / den
            })
            .collect()
    }

    #[test]
    fn constant_profile_is_fixed_point() {
        let p = profile(vec![2.0; 30]);
        let out = healthy_radius(&p, &params(10.4, 21.5, 0.296, 0.0)).unwrap();
        for h in &out.r_h {
            assert_eq!(*h, 2.0);
        }
        assert_eq!(compute_kappa(&p), 0.0);
    }

    #[test]
    fn kappa_of_single_dip() {
        let p = profile(vec![2.0, 2.0, 2.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(compute_kappa(&p), 1.0);
    }

    #[test]
    fn kappa_without_interior_dip_is_half_range() {
        let p = profile(vec![1.0, 1.2, 1.4, 1.6, 1.8]);
        assert!((compute_kappa(&p) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn five_point_profile_matches_double_loop() {
        let p = profile(vec![2.0, 2.0, 1.0, 2.0, 2.0]);
        let prm = params(1.0, 2.0, 0.3, compute_kappa(&p));
        let got = healthy_radius(&p, &prm).unwrap().r_h;
        let want = naive(p.radius(), &prm);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() / w < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn healthy_radius_is_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(5..80);
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            let p = profile(r.clone());
            let prm = params(
                rng.random_range(1.0..20.0),
                rng.random_range(1.0..50.0),
                rng.random_range(0.2..0.6),
                compute_kappa(&p),
            );
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for h in healthy_radius(&p, &prm).unwrap().r_h {
                assert!(h >= lo - 1e-12 && h <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn stenosis_degree_substitution() {
        let p = profile(vec![1.0, 2.0, 2.0, 2.0, 2.0]);
        let sd = stenosis_degree(&p, &[2.0, 2.0, 2.0, 2.0, 2.0]).unwrap();
        assert_eq!(sd.sd, vec![0.5, 0.0, 0.0, 0.0, 0.0]);
        assert!(stenosis_degree(&p, &[2.0, 0.0, 2.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn loss_of_single_offset_peak() {
        // constant profile: r_h = r, so shifting one observation at the peak
        // is equivalent to a one-term residual
        let p = profile(vec![2.0; 9]);
        let prm = params(1.0, 2.0, 0.3, 0.0);
        assert_eq!(regression_loss(&prm, &p, &[4]).unwrap(), 0.0);
        let h = healthy_radius(&p, &prm).unwrap().r_h;
        let r = p.radius();
        let residual = h[4] - r[4];
        assert!((regression_loss(&prm, &p, &[4]).unwrap() - residual * residual).abs() < 1e-15);
        assert!(regression_loss(&prm, &p, &[]).is_err());
    }

    #[test]
    fn loss_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r: Vec<f64> = (0..60).map(|_| rng.random_range(1.0..2.5)).collect();
        let p = profile(r.clone());
        let prm = params(3.0, 8.0, 0.3, compute_kappa(&p));
        let peaks = [4, 17, 33, 50];
        let h = naive(&r, &prm);
        let oracle = peaks.iter().map(|&i| (h[i] - r[i]).powi(2)).sum::<f64>() / 4.0;
        let got = regression_loss(&prm, &p, &peaks).unwrap();
        assert!((got - oracle).abs() < 1e-15, "{got} vs {oracle}");
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = profile(vec![2.0; 9]);
        assert!(healthy_radius(&p, &params(0.0, 2.0, 0.3, 0.0)).is_err());
        assert!(healthy_radius(&p, &params(1.0, 2.0, f64::NAN, 0.0)).is_err());
    }
}
