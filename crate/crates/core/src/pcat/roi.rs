use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BranchLabel, Centerline, Vec3};
use crate::stenosis::{interpolate, Lesion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiKind {
    Vessel,
    Lesion,
}

impl RoiKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoiKind::Vessel => "vessel",
            RoiKind::Lesion => "lesion",
        }
    }
}

/// Where per-vessel ROIs start and how wide ROIs are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiRules {
    pub length_mm: f64,
    /// Offset from the ostium.
    pub rca_offset_mm: f64,
    /// Offsets from the first left bifurcation.
    pub lad_offset_mm: f64,
    pub lcx_offset_mm: f64,
    /// Outer radius over lumen (vessel) or healthy (lesion) radius.
    pub radius_factor: f64,
}

impl Default for RoiRules {
    fn default() -> Self {
        Self {
            length_mm: 40.0,
            rca_offset_mm: 10.0,
            lad_offset_mm: 10.0,
            lcx_offset_mm: 0.0,
            radius_factor: 3.0,
        }
    }
}

/// Tube around a stretch of centerline.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeRoi {
    pub kind: RoiKind,
    pub branch: BranchLabel,
    pub lesion_id: Option<usize>,
    pub points: Vec<Vec3>,
    pub outer_radius: Vec<f64>,
    pub lumen_radius: Vec<f64>,
    pub start_mm: f64,
    pub end_mm: f64,
    /// The requested window ran past the end of the centerline.
    pub truncated: bool,
}

impl TubeRoi {
    pub fn length(&self) -> f64 {
        self.end_mm - self.start_mm
    }

    /// Analytic volume of the truncated-cone chain, end caps flat.
    pub fn analytic_volume(&self) -> f64 {
        self.points
            .windows(2)
            .zip(self.outer_radius.windows(2))
            .map(|(p, r)| {
                let h = (p[1] - p[0]).norm();
                std::f64::consts::PI * h * (r[0] * r[0] + r[0] * r[1] + r[1] * r[1]) / 3.0
            })
            .sum()
    }

    /// Copy moved by `offset`.
    pub fn translated(&self, offset: &Vec3) -> Self {
        Self {
            points: self.points.iter().map(|p| p + offset).collect(),
            ..self.clone()
        }
    }

    fn validate(self) -> Result<Self> {
        if self.points.len() < 2 || !(self.end_mm > self.start_mm) {
            return Err(Error::EmptyRoi(format!(
                "{} {} ROI spans [{}, {}] mm",
                self.branch, self.kind.as_str(), self.start_mm, self.end_mm
            )));
        }
        if let Some(i) = self
            .outer_radius
            .iter()
            .zip(&self.lumen_radius)
            .position(|(o, l)| !(o > l))
        {
            return Err(Error::InvalidInput(format!(
                "{} ROI outer radius does not exceed the lumen at point {i}",
                self.branch
            )));
        }
        Ok(self)
    }
}

/// Per-vessel ROI. `bifurcation_mm` is the abscissa of the first left
/// bifurcation; it is ignored for the RCA.
pub fn vessel_roi(
    branch: BranchLabel,
    c: &Centerline,
    bifurcation_mm: Option<f64>,
    rules: &RoiRules,
) -> Result<TubeRoi> {
    let bif = bifurcation_mm.unwrap_or(0.0);
    let start = match branch {
        BranchLabel::Rca => rules.rca_offset_mm,
        BranchLabel::Lad => bif + rules.lad_offset_mm,
        BranchLabel::Lcx => bif + rules.lcx_offset_mm,
        other => {
            return Err(Error::InvalidInput(format!("no per-vessel ROI rule for {other}")));
        }
    };
    if start >= c.length() {
        return Err(Error::EmptyRoi(format!(
            "{branch} is {:.1} mm long, ROI would start at {start:.1} mm",
            c.length()
        )));
    }
    let wanted = start + rules.length_mm;
    let end = wanted.min(c.length());
    let (points, lumen_radius, _) = c.sub_path(start, end);
    let outer_radius = lumen_radius.iter().map(|r| rules.radius_factor * r).collect();
    TubeRoi {
        kind: RoiKind::Vessel,
        branch,
        lesion_id: None,
        points,
        outer_radius,
        lumen_radius,
        start_mm: start,
        end_mm: end,
        truncated: wanted > c.length(),
    }
    .validate()
}

/// Per-lesion ROI: the lesion interval with outer radius `factor * r_h`,
/// `r_h` given on `abscissa`.
pub fn lesion_roi(
    lesion: &Lesion,
    c: &Centerline,
    abscissa: &[f64],
    r_h: &[f64],
    factor: f64,
) -> Result<TubeRoi> {
    let (points, lumen_radius, abs) = c.sub_path(lesion.start_mm, lesion.end_mm);
    let outer_radius = abs.iter().map(|&s| factor * interpolate(abscissa, r_h, s)).collect();
    TubeRoi {
        kind: RoiKind::Lesion,
        branch: lesion.branch,
        lesion_id: Some(lesion.lesion_id),
        points,
        outer_radius,
        lumen_radius,
        start_mm: lesion.start_mm,
        end_mm: lesion.end_mm,
        truncated: false,
    }
    .validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64, r: f64) -> Centerline {
        let n = (len / 0.5) as usize + 1;
        let pts = (0..n).map(|i| Vec3::new(i as f64 * 0.5, 0.0, 0.0)).collect();
        Centerline::new(pts, vec![r; n]).unwrap()
    }

    #[test]
    fn rca_window_starts_ten_mm_in() {
        let roi = vessel_roi(BranchLabel::Rca, &straight(60.0, 1.5), None, &RoiRules::default()).unwrap();
        assert_eq!((roi.start_mm, roi.end_mm), (10.0, 50.0));
        assert!(!roi.truncated);
        assert!(roi.outer_radius.iter().all(|&r| (r - 4.5).abs() < 1e-12));
    }

    #[test]
    fn lcx_window_starts_at_bifurcation() {
        let roi = vessel_roi(BranchLabel::Lcx, &straight(70.0, 1.5), Some(0.0), &RoiRules::default()).unwrap();
        assert_eq!((roi.start_mm, roi.end_mm), (0.0, 40.0));
    }

    #[test]
    fn short_lad_is_truncated() {
        let roi = vessel_roi(BranchLabel::Lad, &straight(45.0, 1.5), Some(0.0), &RoiRules::default()).unwrap();
        assert_eq!((roi.start_mm, roi.end_mm), (10.0, 45.0));
        assert!(roi.truncated);
    }

    #[test]
    fn branch_shorter_than_offset_is_empty() {
        let err = vessel_roi(BranchLabel::Lad, &straight(20.0, 1.5), Some(12.0), &RoiRules::default());
        assert!(matches!(err, Err(Error::EmptyRoi(_))));
    }

    #[test]
    fn lesion_tube_uses_healthy_radius() {
        let c = straight(60.0, 1.0);
        let lesion = Lesion {
            branch: BranchLabel::Lad,
            lesion_id: 2,
            start_mm: 20.0,
            end_mm: 26.0,
            max_sd: 0.4,
            length_mm: 6.0,
            mla_mm2: 1.0,
            dist_ostium_mm: 23.0,
            tortuosity: 1.0,
        };
        let abscissa: Vec<f64> = c.abscissa().to_vec();
        let r_h = vec![1.5; abscissa.len()];
        let roi = lesion_roi(&lesion, &c, &abscissa, &r_h, 3.0).unwrap();
        assert_eq!(roi.length(), 6.0);
        assert!(roi.outer_radius.iter().all(|&r| (r - 4.5).abs() < 1e-12));
        let cylinder = std::f64::consts::PI * 4.5 * 4.5 * 6.0;
        assert!((roi.analytic_volume() - cylinder).abs() < 1e-9);
    }

    #[test]
    fn curved_lesion_follows_path_points() {
        let n = 201;
        let pts: Vec<Vec3> = (0..n)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / (n - 1) as f64;
                Vec3::new(20.0 * t.cos(), 20.0 * t.sin(), 0.0)
            })
            .collect();
        let c = Centerline::new(pts, vec![1.0; n]).unwrap();
        let lesion = Lesion {
            branch: BranchLabel::Rca,
            lesion_id: 0,
            start_mm: 10.0,
            end_mm: 50.0,
            max_sd: 0.3,
            length_mm: 40.0,
            mla_mm2: 1.0,
            dist_ostium_mm: 30.0,
            tortuosity: 0.9,
        };
        let roi = lesion_roi(&lesion, &c, c.abscissa(), &vec![1.2; n], 3.0).unwrap();
        // every path point is on the arc, none on the chord
        for p in &roi.points {
            assert!((p.xy().norm() - 20.0).abs() < 1e-2);
        }
        assert!(roi.points.len() > 10);
    }
}
