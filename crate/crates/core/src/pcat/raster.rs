use bitvec::prelude::*;
use rayon::prelude::*;

use super::roi::TubeRoi;
use super::volume::{BinaryMask, Grid};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

struct Segment {
    a: Vec3,
    d: Vec3,
    len2: f64,
    ra: f64,
    rb: f64,
    /// Inclusive voxel index bounds, or `None` when outside the grid.
    bounds: Option<[[usize; 2]; 3]>,
}

impl Segment {
    fn contains(&self, x: &Vec3) -> bool {
        let t = ((x - self.a).dot(&self.d) / self.len2).clamp(0.0, 1.0);
        let closest = self.a + self.d * t;
        let r = self.ra + (self.rb - self.ra) * t;
        (x - closest).norm_squared() <= r * r
    }
}

fn index_bounds(grid: &Grid, lo: &Vec3, hi: &Vec3) -> Option<[[usize; 2]; 3]> {
    let mut cmin = Vec3::repeat(f64::INFINITY);
    let mut cmax = Vec3::repeat(f64::NEG_INFINITY);
    for corner in 0..8 {
        let p = Vec3::new(
            if corner & 1 == 0 { lo.x } else { hi.x },
            if corner & 2 == 0 { lo.y } else { hi.y },
            if corner & 4 == 0 { lo.z } else { hi.z },
        );
        let c = grid.continuous_index(&p);
        cmin = cmin.inf(&c);
        cmax = cmax.sup(&c);
    }
    let mut out = [[0usize; 2]; 3];
    for axis in 0..3 {
        let n = grid.dims[axis] as f64;
        let a = cmin[axis].floor();
        let b = cmax[axis].ceil();
        if b < 0.0 || a > n - 1.0 {
            return None;
        }
        out[axis] = [a.max(0.0) as usize, b.min(n - 1.0) as usize];
    }
    Some(out)
}

/// Voxels whose centre lies inside the tube, between the planes normal to
/// the path at both ends, and outside the lumen.
pub fn rasterize_tube(roi: &TubeRoi, grid: &Grid, lumen: &BinaryMask) -> Result<BinaryMask> {
    if lumen.grid != *grid {
        return Err(Error::GridMismatch);
    }
    let segments: Vec<Segment> = roi
        .points
        .windows(2)
        .zip(roi.outer_radius.windows(2))
        .filter_map(|(p, r)| {
            let d = p[1] - p[0];
            let len2 = d.norm_squared();
            if len2 == 0.0 {
                return None;
            }
            let reach = Vec3::repeat(r[0].max(r[1]));
            let lo = p[0].inf(&p[1]) - reach;
            let hi = p[0].sup(&p[1]) + reach;
            Some(Segment {
                a: p[0],
                d,
                len2,
                ra: r[0],
                rb: r[1],
                bounds: index_bounds(grid, &lo, &hi),
            })
        })
        .collect();
    let mut mask = BinaryMask::empty(grid.clone());
    let (Some(first), Some(last)) = (segments.first(), segments.last()) else {
        return Ok(mask);
    };
    let start = first.a;
    let t_start = first.d.normalize();
    let end = last.a + last.d;
    let t_end = last.d.normalize();

    let [nx, ny, nz] = grid.dims;
    let slabs: Vec<Vec<usize>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mut hit = bitvec![0; nx * ny];
            let mut out = Vec::new();
            for seg in &segments {
                let Some(b) = seg.bounds else { continue };
                if k < b[2][0] || k > b[2][1] {
                    continue;
                }
                for j in b[1][0]..=b[1][1] {
                    for i in b[0][0]..=b[0][1] {
                        let local = i + nx * j;
                        if hit[local] {
                            continue;
                        }
                        let x = grid.world(i, j, k);
                        if seg.contains(&x)
                            && (x - start).dot(&t_start) >= 0.0
                            && (x - end).dot(&t_end) <= 0.0
                        {
                            hit.set(local, true);
                            let idx = grid.index(i, j, k);
                            if !lumen.get(idx) {
                                out.push(idx);
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    for idx in slabs.into_iter().flatten() {
        mask.set(idx, true);
    }
    Ok(mask)
}
