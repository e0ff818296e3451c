//! Healthy-radius estimation, stenosis degree and lesion extraction along a
//! single vessel.

mod lesions;
mod optimize;
pub mod peaks;
mod regression;

pub use lesions::{
    check_filters, detect_lesions, lesion_candidates, lesion_morphometrics, reference_diameter,
    Lesion, LesionCriteria, LesionInterval, Rejection,
};
pub use optimize::{optimize_params, FitResult, OptimizeOptions, ParamBounds};
pub use peaks::{detect_peaks, PeakOptions, PeakSet};
pub use regression::{
    compute_kappa, healthy_radius, healthy_radius_at, normal_density, regression_loss,
    stenosis_degree, RegressionIntermediates, RegressionParams, StenosisProfile,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BranchLabel, Centerline};

/// Abscissa spacing the regression runs at, mm. Index-space kernel widths
/// are expressed in samples of this spacing.
pub const RESAMPLE_STEP: f64 = 0.5;

/// Radius as a function of abscissa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusProfile {
    abscissa: Vec<f64>,
    radius: Vec<f64>,
}

impl RadiusProfile {
    pub const MIN_POINTS: usize = 5;

    pub fn new(abscissa: Vec<f64>, radius: Vec<f64>) -> Result<Self> {
        if abscissa.len() != radius.len() {
            return Err(Error::InvalidProfile(format!(
                "{} abscissas but {} radii",
                abscissa.len(),
                radius.len()
            )));
        }
        if radius.len() < Self::MIN_POINTS {
            return Err(Error::InvalidProfile(format!(
                "need at least {} points, got {}",
                Self::MIN_POINTS,
                radius.len()
            )));
        }
        if let Some(i) = radius.iter().position(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidProfile(format!("radius at {i} is not positive")));
        }
        if let Some(i) = abscissa.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidProfile(format!(
                "abscissa not strictly increasing at {i}"
            )));
        }
        Ok(Self { abscissa, radius })
    }

    pub fn from_centerline(c: &Centerline) -> Result<Self> {
        Self::new(c.abscissa().to_vec(), c.radius().to_vec())
    }

    pub fn len(&self) -> usize {
        self.radius.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radius.is_empty()
    }

    pub fn abscissa(&self) -> &[f64] {
        &self.abscissa
    }

    pub fn radius(&self) -> &[f64] {
        &self.radius
    }

    pub fn mean_radius(&self) -> f64 {
        self.radius.iter().sum::<f64>() / self.radius.len() as f64
    }

    /// Linear interpolation of the radius at abscissa `s` (clamped).
    pub fn radius_at(&self, s: f64) -> f64 {
        interpolate(&self.abscissa, &self.radius, s)
    }

    /// Uniformly spaced copy starting at the first abscissa; the last sample
    /// is the last multiple of `step` inside the profile.
    pub fn resample(&self, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidParams(format!("resample step must be positive: {step}")));
        }
        let s0 = self.abscissa[0];
        let span = self.abscissa[self.len() - 1] - s0;
        let n = (span / step + 1e-9).floor() as usize + 1;
        let abscissa: Vec<f64> = (0..n).map(|k| s0 + k as f64 * step).collect();
        let radius = abscissa.iter().map(|&s| self.radius_at(s)).collect();
        Self::new(abscissa, radius)
    }

    /// Copy with radii multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.abscissa.clone(), self.radius.iter().map(|r| r * s).collect())
    }
}

/// Piecewise-linear interpolation of `ys` over sorted `xs`, clamped at the ends.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let j = xs.partition_point(|&v| v <= x) - 1;
    let t = (x - xs[j]) / (xs[j + 1] - xs[j]);
    ys[j] + (ys[j + 1] - ys[j]) * t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StenosisConfig {
    pub bounds: ParamBounds,
    pub optimize: OptimizeOptions,
    pub lesions: LesionCriteria,
}

/// Everything computed for one vessel.
#[derive(Debug, Clone)]
pub struct VesselAnalysis {
    pub branch: BranchLabel,
    /// Profile resampled at [`RESAMPLE_STEP`].
    pub profile: RadiusProfile,
    pub fit: FitResult,
    pub regression: RegressionIntermediates,
    pub sd: StenosisProfile,
    pub lesions: Vec<Lesion>,
    pub flags: Vec<String>,
}

pub fn analyze_vessel(
    c: &Centerline,
    branch: BranchLabel,
    cfg: &StenosisConfig,
) -> Result<VesselAnalysis> {
    let profile = RadiusProfile::from_centerline(c)?.resample(RESAMPLE_STEP)?;
    let fit = optimize_params(&profile, &cfg.bounds, &cfg.optimize)?;
    let regression = healthy_radius(&profile, &fit.params)?;
    let sd = stenosis_degree(&profile, &regression.r_h)?;
    let lesions = detect_lesions(&sd, &profile, &cfg.lesions)
        .iter()
        .enumerate()
        .map(|(id, iv)| lesion_morphometrics(iv, &profile, &sd, c, branch, id))
        .collect();
    let mut flags = Vec::new();
    if fit.peaks.fallback {
        flags.push(format!("{branch}: no radius peak, endpoints used as support"));
    }
    if fit.flagged {
        flags.push(format!("{branch}: refinement hit a non-finite loss, grid optimum kept"));
    }
    if regression.flagged() {
        flags.push(format!(
            "{branch}: weights vanished at {} points, unweighted smoothing used",
            regression.fallback.len()
        ));
    }
    Ok(VesselAnalysis {
        branch,
        profile,
        fit,
        regression,
        sd,
        lesions,
        flags,
    })
}
