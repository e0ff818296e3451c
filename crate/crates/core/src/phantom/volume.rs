use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::pcat::{BinaryMask, Grid, HuWindow, TubeRoi, VoxelVolume};

/// Discrete HU distribution for fat voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuSampler {
    pub values: Vec<i16>,
    pub weights: Vec<f64>,
}

impl HuSampler {
    pub fn constant(value: i16) -> Self {
        Self {
            values: vec![value],
            weights: vec![1.0],
        }
    }

    pub fn uniform(values: &[i16]) -> Self {
        Self {
            values: values.to_vec(),
            weights: vec![1.0; values.len()],
        }
    }

    /// Every tenth HU from -200 to -20, heavier in the middle; a few draws
    /// fall outside the fat window.
    pub fn default_fat() -> Self {
        let values: Vec<i16> = (-200..=-20).step_by(10).collect();
        let weights = values
            .iter()
            .map(|&v| {
                let z = (f64::from(v) + 95.0) / 45.0;
                (-0.5 * z * z).exp()
            })
            .collect();
        Self { values, weights }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.len() != self.weights.len() {
            return Err(Error::PhantomSpec("sampler needs one weight per value".into()));
        }
        if self.values.iter().any(|&v| !(-1024..=3071).contains(&v)) {
            return Err(Error::PhantomSpec("sampler support must lie in [-1024, 3071] HU".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::PhantomSpec("sampler weights must be non-negative with a positive sum".into()));
        }
        Ok(())
    }

    /// Expected HU of a draw conditioned on landing in `window`.
    pub fn in_window_mean(&self, window: &HuWindow) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for (&v, &w) in self.values.iter().zip(&self.weights) {
            if window.contains(v) {
                num += w * f64::from(v);
                den += w;
            }
        }
        (den > 0.0).then(|| num / den)
    }

    fn distribution(&self) -> Result<WeightedIndex<f64>> {
        self.validate()?;
        WeightedIndex::new(&self.weights).map_err(|e| Error::PhantomSpec(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid> {
        Grid::axis_aligned(self.dims, self.spacing, Vec3::from(self.origin))
    }

    /// Axis-aligned grid covering `lo..hi` at isotropic `spacing`.
    pub fn covering(lo: &Vec3, hi: &Vec3, spacing: f64) -> Self {
        let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / spacing).ceil() as usize + 1);
        Self {
            dims,
            spacing: [spacing; 3],
            origin: [lo.x, lo.y, lo.z],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSpec {
    pub seed: u64,
    pub grid: GridSpec,
    pub sampler: HuSampler,
    pub lumen_hu: i16,
    pub background_hu: i16,
    /// Fat is painted this far beyond the outer ROI radius.
    pub fat_margin_mm: f64,
}

impl VolumeSpec {
    pub fn new(seed: u64, grid: GridSpec, sampler: HuSampler) -> Self {
        Self {
            seed,
            grid,
            sampler,
            lumen_hu: 300,
            background_hu: 50,
            fat_margin_mm: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeTruth {
    /// Non-lumen voxels inside the analytic ROI.
    pub roi_voxels: usize,
    /// In-window HU values of those voxels, ascending.
    pub in_window: Vec<i16>,
    pub fai: Option<f64>,
    pub lumen_voxels: usize,
    pub flags: Vec<String>,
}

/// Tube to paint: lumen out to `lumen` radius, fat out to `fat` radius.
#[derive(Debug, Clone)]
pub struct PaintTube {
    pub points: Vec<Vec3>,
    pub lumen: Vec<f64>,
    pub fat: Vec<f64>,
}

const BACKGROUND: u8 = 0;
const FAT: u8 = 1;
const LUMEN: u8 = 2;

/// Distance from `x` to segment `a..b` and the clamped parameter.
fn seg_distance(x: &Vec3, a: &Vec3, b: &Vec3) -> (f64, f64) {
    let d = b - a;
    let t = ((x - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    ((x - (a + d * t)).norm(), t)
}

fn for_each_near(grid: &Grid, a: &Vec3, b: &Vec3, reach: f64, mut f: impl FnMut(usize, Vec3)) {
    let lo = a.inf(b) - Vec3::repeat(reach);
    let hi = a.sup(b) + Vec3::repeat(reach);
    let mut range = [[0usize; 2]; 3];
    for axis in 0..3 {
        let n = grid.dims[axis] as f64;
        let l = ((lo[axis] - grid.origin[axis]) / grid.spacing[axis]).floor();
        let h = ((hi[axis] - grid.origin[axis]) / grid.spacing[axis]).ceil();
        if h < 0.0 || l > n - 1.0 {
            return;
        }
        range[axis] = [l.max(0.0) as usize, h.min(n - 1.0) as usize];
    }
    for k in range[2][0]..=range[2][1] {
        for j in range[1][0]..=range[1][1] {
            for i in range[0][0]..=range[0][1] {
                f(grid.index(i, j, k), grid.world(i, j, k));
            }
        }
    }
}

/// Paints lumen, fat and background for a set of tubes on an axis-aligned
/// grid. Lumen wins where tubes overlap. Fat HU are drawn in voxel order.
pub fn paint_volume(
    grid: &Grid,
    tubes: &[PaintTube],
    sampler: &HuSampler,
    lumen_hu: i16,
    background_hu: i16,
    seed: u64,
) -> Result<(VoxelVolume, BinaryMask)> {
    let dist = sampler.distribution()?;
    let mut state = vec![BACKGROUND; grid.len()];
    for tube in tubes {
        for s in 0..tube.points.len().saturating_sub(1) {
            let (a, b) = (tube.points[s], tube.points[s + 1]);
            if a == b {
                continue;
            }
            let reach = tube.fat[s].max(tube.fat[s + 1]);
            for_each_near(grid, &a, &b, reach, |idx, x| {
                let (d, t) = seg_distance(&x, &a, &b);
                let lumen = tube.lumen[s] + (tube.lumen[s + 1] - tube.lumen[s]) * t;
                let fat = tube.fat[s] + (tube.fat[s + 1] - tube.fat[s]) * t;
                if d <= lumen {
                    state[idx] = LUMEN;
                } else if d <= fat && state[idx] == BACKGROUND {
                    state[idx] = FAT;
                }
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lumen = BinaryMask::empty(grid.clone());
    let data: Vec<i16> = state
        .iter()
        .enumerate()
        .map(|(idx, &s)| match s {
            LUMEN => {
                lumen.set(idx, true);
                lumen_hu
            }
            FAT => sampler.values[dist.sample(&mut rng)],
            _ => background_hu,
        })
        .collect();
    Ok((VoxelVolume::new(grid.clone(), data)?, lumen))
}

/// Voxel indices whose centre lies in the ROI tube between its end planes.
fn roi_members(grid: &Grid, roi: &TubeRoi) -> Vec<usize> {
    let pts = &roi.points;
    let n = pts.len();
    let t0 = (pts[1] - pts[0]).normalize();
    let t1 = (pts[n - 1] - pts[n - 2]).normalize();
    let mut inside = vec![false; grid.len()];
    for s in 0..n - 1 {
        let (a, b) = (pts[s], pts[s + 1]);
        if a == b {
            continue;
        }
        let reach = roi.outer_radius[s].max(roi.outer_radius[s + 1]);
        for_each_near(grid, &a, &b, reach, |idx, x| {
            let (d, t) = seg_distance(&x, &a, &b);
            let r = roi.outer_radius[s] + (roi.outer_radius[s + 1] - roi.outer_radius[s]) * t;
            if d <= r && (x - pts[0]).dot(&t0) >= 0.0 && (x - pts[n - 1]).dot(&t1) <= 0.0 {
                inside[idx] = true;
            }
        });
    }
    inside
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| v.then_some(i))
        .collect()
}

/// Volume around one ROI: lumen along the ROI path, fat annulus out to the
/// outer radius plus a margin, background elsewhere.
pub fn gen_pcat_volume(spec: &VolumeSpec, roi: &TubeRoi) -> Result<(VoxelVolume, BinaryMask, VolumeTruth)> {
    let grid = spec.grid.grid()?;
    let mut flags = Vec::new();
    if spec.grid.spacing.iter().any(|&s| s > 1.0) {
        flags.push(format!("grid spacing {:?} mm is coarser than 1 mm", spec.grid.spacing));
    }
    let upper = grid.world(grid.dims[0] - 1, grid.dims[1] - 1, grid.dims[2] - 1);
    for (p, r) in roi.points.iter().zip(&roi.outer_radius) {
        for axis in 0..3 {
            if p[axis] - r < grid.origin[axis] || p[axis] + r > upper[axis] {
                return Err(Error::PhantomSpec("grid does not cover the ROI".into()));
            }
        }
    }
    let tube = PaintTube {
        points: roi.points.clone(),
        lumen: roi.lumen_radius.clone(),
        fat: roi.outer_radius.iter().map(|r| r + spec.fat_margin_mm).collect(),
    };
    let (vol, lumen) = paint_volume(&grid, &[tube], &spec.sampler, spec.lumen_hu, spec.background_hu, spec.seed)?;
    let window = HuWindow::default();
    let members: Vec<usize> = roi_members(&grid, roi)
        .into_iter()
        .filter(|&i| !lumen.get(i))
        .collect();
    let mut in_window: Vec<i16> = members
        .iter()
        .map(|&i| vol.data[i])
        .filter(|&v| window.contains(v))
        .collect();
    in_window.sort_unstable();
    let fai = (!in_window.is_empty())
        .then(|| in_window.iter().map(|&v| f64::from(v)).sum::<f64>() / in_window.len() as f64);
    let truth = VolumeTruth {
        roi_voxels: members.len(),
        in_window,
        fai,
        lumen_voxels: lumen.count(),
        flags,
    };
    Ok((vol, lumen, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BranchLabel;
    use crate::pcat::RoiKind;

    fn roi() -> TubeRoi {
        let points: Vec<Vec3> = (0..=40).map(|i| Vec3::new(0.0, 0.0, i as f64 * 0.5)).collect();
        TubeRoi {
            kind: RoiKind::Lesion,
            branch: BranchLabel::Lad,
            lesion_id: Some(0),
            outer_radius: vec![4.5; points.len()],
            lumen_radius: vec![1.5; points.len()],
            points,
            start_mm: 0.0,
            end_mm: 20.0,
            truncated: false,
        }
    }

    fn spec(sampler: HuSampler, spacing: f64) -> VolumeSpec {
        let lo = Vec3::new(-8.0, -8.0, -8.0);
        let hi = Vec3::new(8.0, 8.0, 28.0);
        VolumeSpec::new(3, GridSpec::covering(&lo, &hi, spacing), sampler)
    }

    #[test]
    fn constant_sampler_gives_exact_fai() {
        let (vol, lumen, truth) = gen_pcat_volume(&spec(HuSampler::constant(-80), 0.5), &roi()).unwrap();
        assert_eq!(truth.fai, Some(-80.0));
        assert!(truth.flags.is_empty());
        assert!(lumen.iter_ones().all(|i| vol.data[i] == 300));
        assert!(truth.lumen_voxels > 0);
    }

    #[test]
    fn two_point_sampler_records_exact_counts() {
        let s = spec(HuSampler::uniform(&[-100, -60]), 0.5);
        let (_, _, truth) = gen_pcat_volume(&s, &roi()).unwrap();
        let lows = truth.in_window.iter().filter(|&&v| v == -100).count() as f64;
        let n = truth.in_window.len() as f64;
        let expected = (-100.0 * lows + -60.0 * (n - lows)) / n;
        assert_eq!(truth.fai, Some(expected));
        assert!((expected + 80.0).abs() < 3.0);
    }

    #[test]
    fn coarse_grid_is_flagged() {
        let (_, _, truth) = gen_pcat_volume(&spec(HuSampler::constant(-80), 1.2), &roi()).unwrap();
        assert_eq!(truth.flags.len(), 1);
    }

    #[test]
    fn sampler_support_is_checked() {
        let bad = HuSampler::constant(-2000);
        assert!(gen_pcat_volume(&spec(bad, 0.5), &roi()).is_err());
    }
}
