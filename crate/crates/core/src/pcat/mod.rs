//! Pericoronary adipose tissue: ROIs around vessels and lesions, voxel
//! rasterization and attenuation features.

mod raster;
mod roi;
mod volume;

pub use raster::rasterize_tube;
pub use roi::{lesion_roi, vessel_roi, RoiKind, RoiRules, TubeRoi};
pub use volume::{
    load_mask, load_volume, save_mask, save_volume, volume_paths, BinaryMask, Grid, VoxelVolume,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive HU range counted as fat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuWindow {
    pub lo: i16,
    pub hi: i16,
}

impl Default for HuWindow {
    fn default() -> Self {
        Self { lo: -190, hi: -30 }
    }
}

impl HuWindow {
    pub fn contains(&self, hu: i16) -> bool {
        hu >= self.lo && hu <= self.hi
    }
}

pub const PERCENTILES: [f64; 6] = [10.0, 25.0, 50.0, 75.0, 90.0, 95.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcatFeatures {
    /// Mean fat HU; `None` without fat voxels.
    pub fai: Option<f64>,
    /// Fat HU at [`PERCENTILES`].
    pub percentiles: Option<[f64; 6]>,
    pub fat_fraction: f64,
    pub fat_volume_mm3: f64,
    pub roi_voxels: usize,
    pub fat_voxels: usize,
}

/// Linear interpolation between closest ranks of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// In-window HU values of the masked voxels, ascending.
pub fn fat_values(mask: &BinaryMask, vol: &VoxelVolume, window: &HuWindow) -> Result<Vec<i16>> {
    if mask.grid != vol.grid {
        return Err(Error::GridMismatch);
    }
    let mut v: Vec<i16> = mask
        .iter_ones()
        .map(|i| vol.data[i])
        .filter(|&hu| window.contains(hu))
        .collect();
    v.sort_unstable();
    Ok(v)
}

pub fn pcat_features(mask: &BinaryMask, vol: &VoxelVolume, window: &HuWindow) -> Result<PcatFeatures> {
    let fat = fat_values(mask, vol, window)?;
    let roi_voxels = mask.count();
    let fat_voxels = fat.len();
    let fat_fraction = if roi_voxels == 0 {
        0.0
    } else {
        fat_voxels as f64 / roi_voxels as f64
    };
    let fat_volume_mm3 = fat_voxels as f64 * vol.grid.voxel_volume();
    if fat.is_empty() {
        return Ok(PcatFeatures {
            fai: None,
            percentiles: None,
            fat_fraction,
            fat_volume_mm3,
            roi_voxels,
            fat_voxels,
        });
    }
    let sum: i64 = fat.iter().map(|&v| i64::from(v)).sum();
    let sorted: Vec<f64> = fat.iter().map(|&v| f64::from(v)).collect();
    Ok(PcatFeatures {
        fai: Some(sum as f64 / fat_voxels as f64),
        percentiles: Some(PERCENTILES.map(|q| percentile(&sorted, q))),
        fat_fraction,
        fat_volume_mm3,
        roi_voxels,
        fat_voxels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn setup(values: &[i16]) -> (BinaryMask, VoxelVolume) {
        let g = Grid::axis_aligned([values.len(), 2, 1], [0.4, 0.5, 0.6], Vec3::zeros()).unwrap();
        let mut data = values.to_vec();
        data.extend(std::iter::repeat(-100).take(values.len()));
        let vol = VoxelVolume::new(g.clone(), data).unwrap();
        let mut mask = BinaryMask::empty(g);
        for i in 0..values.len() {
            mask.set(i, true);
        }
        (mask, vol)
    }

    #[test]
    fn constant_fat() {
        let (m, v) = setup(&[-100; 12]);
        let f = pcat_features(&m, &v, &HuWindow::default()).unwrap();
        assert_eq!(f.fai, Some(-100.0));
        assert_eq!(f.percentiles, Some([-100.0; 6]));
        assert_eq!(f.fat_fraction, 1.0);
        assert_eq!(f.fat_volume_mm3, 12.0 * (0.4 * 0.5 * 0.6));
    }

    #[test]
    fn no_fat_reports_null() {
        let (m, v) = setup(&[0; 8]);
        let f = pcat_features(&m, &v, &HuWindow::default()).unwrap();
        assert_eq!(f.fai, None);
        assert_eq!(f.fat_fraction, 0.0);
        assert_eq!(f.roi_voxels, 8);
    }

    #[test]
    fn window_is_inclusive() {
        let (m, v) = setup(&[-191, -190, -30, -29, 300, -60]);
        let f = pcat_features(&m, &v, &HuWindow::default()).unwrap();
        assert_eq!(f.fat_voxels, 3);
        assert!((f.fai.unwrap() - (-280.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn percentiles_interpolate_linearly() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&sorted, 50.0), 2.5);
        assert_eq!(percentile(&sorted, 10.0), 1.3);
        assert_eq!(percentile(&sorted, 100.0), 4.0);
        assert_eq!(percentile(&[7.0], 95.0), 7.0);
    }
}
