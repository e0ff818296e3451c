//! Paints fat around a straight vessel, rasterizes the ROI and computes the
//! fat features.

use coronary_pcat::geometry::{BranchLabel, Vec3};
use coronary_pcat::pcat::{pcat_features, rasterize_tube, HuWindow, RoiKind, TubeRoi};
use coronary_pcat::phantom::{gen_pcat_volume, GridSpec, HuSampler, VolumeSpec};

fn main() -> coronary_pcat::Result<()> {
    let n = 21;
    let roi = TubeRoi {
        kind: RoiKind::Vessel,
        branch: BranchLabel::Lad,
        lesion_id: None,
        points: (0..n).map(|k| Vec3::new(0.0, 0.0, 2.0 * k as f64)).collect(),
        outer_radius: vec![4.5; n],
        lumen_radius: vec![1.5; n],
        start_mm: 0.0,
        end_mm: 40.0,
        truncated: false,
    };
    let grid = GridSpec::covering(&Vec3::new(-8.0, -8.0, -7.0), &Vec3::new(8.0, 8.0, 47.0), 0.5);
    let sampler = HuSampler::default_fat();
    let expected = sampler.in_window_mean(&HuWindow::default());
    let (vol, lumen, truth) = gen_pcat_volume(&VolumeSpec::new(1, grid, sampler), &roi)?;
    let mask = rasterize_tube(&roi, &vol.grid, &lumen)?;
    let f = pcat_features(&mask, &vol, &HuWindow::default())?;
    println!("ROI voxels {} (analytic {}), fat voxels {}", f.roi_voxels, truth.roi_voxels, f.fat_voxels);
    println!("FAI {:.2} HU, sampler expectation {:.2} HU", f.fai.unwrap_or(f64::NAN), expected.unwrap_or(f64::NAN));
    println!("percentiles {:?}", f.percentiles);
    println!("fat fraction {:.3}, fat volume {:.1} mm3", f.fat_fraction, f.fat_volume_mm3);
    Ok(())
}
