use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stenosis::RadiusProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Baseline {
    Constant { radius: f64 },
    /// Linear from `proximal` at abscissa 0 to `distal` at the last sample.
    Taper { proximal: f64, distal: f64 },
}

impl Baseline {
    pub fn at(&self, s: f64, length: f64) -> f64 {
        match *self {
            Baseline::Constant { radius } => radius,
            Baseline::Taper { proximal, distal } => proximal + (distal - proximal) * (s / length),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LesionShape {
    /// `exp(-x^2 / (2 s^2))` with `s = width / 6`.
    Gaussian,
    /// Raised cosine with support `width`.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    pub center_mm: f64,
    /// Fractional narrowing at the centre, in (0, 1).
    pub depth: f64,
    /// Support width, mm.
    pub width_mm: f64,
    pub shape: LesionShape,
}

impl LesionSpec {
    /// Shape factor in [0, 1], 1 at the centre.
    pub fn shape_at(&self, s: f64) -> f64 {
        let x = s - self.center_mm;
        match self.shape {
            LesionShape::Gaussian => {
                let sigma = self.width_mm / 6.0;
                (-x * x / (2.0 * sigma * sigma)).exp()
            }
            LesionShape::Cosine => {
                if x.abs() >= self.width_mm / 2.0 {
                    0.0
                } else {
                    0.5 * (1.0 + (2.0 * PI * x / self.width_mm).cos())
                }
            }
        }
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.center_mm - self.width_mm / 2.0, self.center_mm + self.width_mm / 2.0)
    }

    /// Half-width where `depth * shape` equals `level`, `None` when the
    /// lesion never reaches it.
    pub fn half_width_at(&self, level: f64) -> Option<f64> {
        if !(self.depth > level) {
            return None;
        }
        Some(match self.shape {
            LesionShape::Gaussian => self.width_mm / 6.0 * (2.0 * (self.depth / level).ln()).sqrt(),
            LesionShape::Cosine => self.width_mm / (2.0 * PI) * (2.0 * level / self.depth - 1.0).acos(),
        })
    }
}

/// Small sinusoidal modulation of the baseline so that the healthy radius
/// has interior maxima to anchor the regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ripple {
    /// Relative amplitude.
    pub amplitude: f64,
    pub wavelength_mm: f64,
}

impl Default for Ripple {
    fn default() -> Self {
        Self {
            amplitude: 0.02,
            wavelength_mm: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub seed: u64,
    pub length_mm: f64,
    pub step_mm: f64,
    pub baseline: Baseline,
    pub ripple: Option<Ripple>,
    pub lesions: Vec<LesionSpec>,
}

impl ProfileSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::PhantomSpec(m));
        if !(self.length_mm > 0.0 && self.step_mm > 0.0) {
            return bad(format!("length {} and step {} must be positive", self.length_mm, self.step_mm));
        }
        let (r0, r1) = match self.baseline {
            Baseline::Constant { radius } => (radius, radius),
            Baseline::Taper { proximal, distal } => (proximal, distal),
        };
        if !(r0 > 0.0 && r1 > 0.0) {
            return bad("baseline radius must be positive".into());
        }
        if let Some(r) = self.ripple {
            if !(r.amplitude >= 0.0 && r.amplitude < 0.5 && r.wavelength_mm > 0.0) {
                return bad(format!("invalid ripple {r:?}"));
            }
        }
        for l in &self.lesions {
            if !(l.depth > 0.0 && l.depth < 1.0) {
                return bad(format!("lesion depth {} outside (0, 1)", l.depth));
            }
            if !(l.width_mm > 2.0) {
                return bad(format!("lesion width {} mm must exceed 2 mm", l.width_mm));
            }
            let (a, b) = l.extent();
            if a < 0.0 || b > self.length_mm {
                return bad(format!("lesion at {} mm does not fit the vessel", l.center_mm));
            }
        }
        let mut ext: Vec<(f64, f64)> = self.lesions.iter().map(LesionSpec::extent).collect();
        ext.sort_by(|x, y| x.0.total_cmp(&y.0));
        if ext.windows(2).any(|w| w[1].0 < w[0].1) {
            return bad("lesions overlap".into());
        }
        Ok(())
    }

    /// Single lesion of random depth in [0.30, 0.70] near the middle of a
    /// 100 mm vessel.
    pub fn random_single_lesion(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1e51);
        let shape = if rng.random::<bool>() {
            LesionShape::Gaussian
        } else {
            LesionShape::Cosine
        };
        let proximal = rng.random_range(1.3..2.0);
        Self {
            seed,
            length_mm: 100.0,
            step_mm: 0.5,
            baseline: Baseline::Taper {
                proximal,
                distal: proximal * rng.random_range(0.75..1.0),
            },
            ripple: Some(Ripple::default()),
            lesions: vec![LesionSpec {
                center_mm: rng.random_range(40.0..60.0),
                depth: rng.random_range(0.30..0.70),
                width_mm: rng.random_range(10.0..16.0),
                shape,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionTruth {
    pub spec: LesionSpec,
    /// Largest true SD over the samples inside the lesion support.
    pub max_sd: f64,
    /// Abscissas where the true SD crosses 0.10, `None` if it never does.
    pub sd10: Option<(f64, f64)>,
    pub sd20: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTruth {
    pub abscissa: Vec<f64>,
    /// Baseline times ripple, without lesions.
    pub healthy: Vec<f64>,
    pub sd: Vec<f64>,
    pub lesions: Vec<LesionTruth>,
}

/// Radius of the healthy vessel at `s`, ripple included.
pub fn healthy_at(spec: &ProfileSpec, phase: f64, s: f64) -> f64 {
    let base = spec.baseline.at(s, spec.length_mm);
    match spec.ripple {
        Some(r) => base * (1.0 + r.amplitude * (2.0 * PI * s / r.wavelength_mm + phase).cos()),
        None => base,
    }
}

/// Product of the lesion narrowing factors at `s`.
pub fn narrowing_at(lesions: &[LesionSpec], s: f64) -> f64 {
    lesions.iter().map(|l| 1.0 - l.depth * l.shape_at(s)).product()
}

/// `r(s) = healthy(s) * prod_k (1 - depth_k shape_k(s))` sampled every
/// `step_mm`.
pub fn gen_radius_profile(spec: &ProfileSpec) -> Result<(RadiusProfile, ProfileTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phase = if spec.ripple.is_some() {
        rng.random_range(0.0..2.0 * PI)
    } else {
        0.0
    };
    let n = (spec.length_mm / spec.step_mm + 1e-9).floor() as usize + 1;
    let abscissa: Vec<f64> = (0..n).map(|k| k as f64 * spec.step_mm).collect();
    let healthy: Vec<f64> = abscissa.iter().map(|&s| healthy_at(spec, phase, s)).collect();
    let factor: Vec<f64> = abscissa.iter().map(|&s| narrowing_at(&spec.lesions, s)).collect();
    let radius: Vec<f64> = healthy.iter().zip(&factor).map(|(h, f)| h * f).collect();
    let sd: Vec<f64> = factor.iter().map(|f| 1.0 - f).collect();
    let lesions = spec
        .lesions
        .iter()
        .map(|l| {
            let (a, b) = l.extent();
            let max_sd = abscissa
                .iter()
                .zip(&sd)
                .filter(|(s, _)| **s >= a && **s <= b)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max);
            let crossing = |level: f64| l.half_width_at(level).map(|h| (l.center_mm - h, l.center_mm + h));
            LesionTruth {
                spec: *l,
                max_sd,
                sd10: crossing(0.10),
                sd20: crossing(0.20),
            }
        })
        .collect();
    let profile = RadiusProfile::new(abscissa.clone(), radius)?;
    Ok((
        profile,
        ProfileTruth {
            abscissa,
            healthy,
            sd,
            lesions,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lesions: Vec<LesionSpec>, ripple: Option<Ripple>) -> ProfileSpec {
        ProfileSpec {
            seed: 1,
            length_mm: 80.0,
            step_mm: 0.5,
            baseline: Baseline::Constant { radius: 1.5 },
            ripple,
            lesions,
        }
    }

    fn lesion(center: f64, depth: f64, shape: LesionShape) -> LesionSpec {
        LesionSpec {
            center_mm: center,
            depth,
            width_mm: 12.0,
            shape,
        }
    }

    #[test]
    fn no_lesion_is_baseline() {
        let (p, t) = gen_radius_profile(&spec(vec![], None)).unwrap();
        assert!(p.radius().iter().all(|&r| r == 1.5));
        assert_eq!(t.healthy, p.radius());
    }

    #[test]
    fn centre_radius_is_scaled_by_depth() {
        for shape in [LesionShape::Gaussian, LesionShape::Cosine] {
            let (p, t) = gen_radius_profile(&spec(vec![lesion(40.0, 0.5, shape)], None)).unwrap();
            assert_eq!(p.radius()[80], 0.75);
            assert_eq!(t.lesions[0].max_sd, 0.5);
        }
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        // f(lo) and f(hi) bracket a root
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn recorded_crossings_match_root_finding() {
        let lesions = vec![lesion(25.0, 0.45, LesionShape::Gaussian), lesion(55.0, 0.6, LesionShape::Cosine)];
        let s = spec(lesions.clone(), Some(Ripple::default()));
        let (_, truth) = gen_radius_profile(&s).unwrap();
        for (l, t) in lesions.iter().zip(&truth.lesions) {
            for (level, rec) in [(0.10, t.sd10), (0.20, t.sd20)] {
                let f = |x: f64| 1.0 - narrowing_at(&lesions, x) - level;
                let left = bisect(f, l.center_mm - l.width_mm / 2.0, l.center_mm);
                let right = bisect(f, l.center_mm, l.center_mm + l.width_mm / 2.0);
                let (a, b) = rec.unwrap();
                assert!((a - left).abs() <= s.step_mm, "{a} vs {left}");
                assert!((b - right).abs() <= s.step_mm, "{b} vs {right}");
            }
        }
    }

    #[test]
    fn overlapping_lesions_are_rejected() {
        let s = spec(vec![lesion(30.0, 0.4, LesionShape::Cosine), lesion(38.0, 0.4, LesionShape::Cosine)], None);
        assert!(matches!(gen_radius_profile(&s), Err(Error::PhantomSpec(_))));
        let narrow = spec(vec![LesionSpec { width_mm: 2.0, ..lesion(30.0, 0.4, LesionShape::Cosine) }], None);
        assert!(gen_radius_profile(&narrow).is_err());
    }

    #[test]
    fn seeded_profiles_repeat() {
        let a = gen_radius_profile(&ProfileSpec::random_single_lesion(9)).unwrap();
        let b = gen_radius_profile(&ProfileSpec::random_single_lesion(9)).unwrap();
        assert_eq!(a, b);
    }
}
