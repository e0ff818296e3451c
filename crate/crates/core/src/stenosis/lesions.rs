use serde::{Deserialize, Serialize};

use super::regression::StenosisProfile;
use super::RadiusProfile;
use crate::geometry::{BranchLabel, Centerline};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionCriteria {
    /// A lesion core is a run with SD strictly above this.
    pub detect_sd: f64,
    /// Cores grow over adjacent points with SD strictly above this.
    pub extend_sd: f64,
    /// Exclusion zone at the ostium, in local reference diameters.
    pub ostial_diameters: f64,
    /// Exclusion zone at the distal end, in local reference diameters.
    pub distal_diameters: f64,
    /// Minimum lesion length, mm.
    pub min_length: f64,
}

impl Default for LesionCriteria {
    fn default() -> Self {
        Self {
            detect_sd: 0.20,
            extend_sd: 0.10,
            ostial_diameters: 2.5,
            distal_diameters: 2.5,
            min_length: 2.0,
        }
    }
}

/// Inclusive index range of a lesion with its most stenotic point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LesionInterval {
    pub start: usize,
    pub end: usize,
    pub peak: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Ostial,
    Distal,
    TooShort,
}

/// Extended and merged SD runs before filtering.
pub fn lesion_candidates(sd: &StenosisProfile, criteria: &LesionCriteria) -> Vec<LesionInterval> {
    let sd = &sd.sd;
    let n = sd.len();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if sd[i] > criteria.detect_sd {
            let mut end = i;
            while end + 1 < n && sd[end + 1] > criteria.detect_sd {
                end += 1;
            }
            let mut lo = i;
            while lo > 0 && sd[lo - 1] > criteria.extend_sd {
                lo -= 1;
            }
            let mut hi = end;
            while hi + 1 < n && sd[hi + 1] > criteria.extend_sd {
                hi += 1;
            }
            match spans.last_mut() {
                Some(last) if lo <= last.1 + 1 => last.1 = last.1.max(hi),
                _ => spans.push((lo, hi)),
            }
            i = end + 1;
        } else {
            i += 1;
        }
    }
    spans
        .into_iter()
        .map(|(start, end)| {
            let mut peak = start;
            for k in start..=end {
                if sd[k] > sd[peak] {
                    peak = k;
                }
            }
            LesionInterval { start, end, peak }
        })
        .collect()
}

/// Mean healthy diameter `2 r / (1 - SD)` over the interval.
pub fn reference_diameter(iv: &LesionInterval, p: &RadiusProfile, sd: &StenosisProfile) -> f64 {
    let r = p.radius();
    let total: f64 = (iv.start..=iv.end).map(|k| 2.0 * r[k] / (1.0 - sd.sd[k])).sum();
    total / (iv.end - iv.start + 1) as f64
}

/// Which filter, if any, removes a candidate.
pub fn check_filters(
    iv: &LesionInterval,
    p: &RadiusProfile,
    sd: &StenosisProfile,
    criteria: &LesionCriteria,
) -> Option<Rejection> {
    let s = p.abscissa();
    let d = reference_diameter(iv, p, sd);
    if s[iv.peak] - s[0] < criteria.ostial_diameters * d {
        Some(Rejection::Ostial)
    } else if s[s.len() - 1] - s[iv.peak] < criteria.distal_diameters * d {
        Some(Rejection::Distal)
    } else if s[iv.end] - s[iv.start] < criteria.min_length {
        Some(Rejection::TooShort)
    } else {
        None
    }
}

/// Lesions surviving all filters, sorted and disjoint.
pub fn detect_lesions(
    sd: &StenosisProfile,
    p: &RadiusProfile,
    criteria: &LesionCriteria,
) -> Vec<LesionInterval> {
    lesion_candidates(sd, criteria)
        .into_iter()
        .filter(|iv| check_filters(iv, p, sd, criteria).is_none())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lesion {
    pub branch: BranchLabel,
    pub lesion_id: usize,
    pub start_mm: f64,
    pub end_mm: f64,
    pub max_sd: f64,
    pub length_mm: f64,
    pub mla_mm2: f64,
    pub dist_ostium_mm: f64,
    /// Chord over arc length, in (0, 1].
    pub tortuosity: f64,
}

pub fn lesion_morphometrics(
    iv: &LesionInterval,
    p: &RadiusProfile,
    sd: &StenosisProfile,
    centerline: &Centerline,
    branch: BranchLabel,
    lesion_id: usize,
) -> Lesion {
    let s = p.abscissa();
    let r = p.radius();
    let start_mm = s[iv.start];
    let end_mm = s[iv.end];
    let length_mm = end_mm - start_mm;
    let min_r = r[iv.start..=iv.end].iter().copied().fold(f64::INFINITY, f64::min);
    let chord = (centerline.point_at(end_mm) - centerline.point_at(start_mm)).norm();
    let tortuosity = if length_mm > 0.0 {
        (chord / length_mm).min(1.0)
    } else {
        1.0
    };
    Lesion {
        branch,
        lesion_id,
        start_mm,
        end_mm,
        max_sd: sd.sd[iv.peak],
        length_mm,
        mla_mm2: std::f64::consts::PI * min_r * min_r,
        dist_ostium_mm: s[iv.peak] - s[0],
        tortuosity,
    }
}
