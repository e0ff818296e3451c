//! Centerline trees and the automatic labelling of the major coronary branches.
//!
//! Coordinates are LPS millimetres. A [`Centerline`] is parameterised by its
//! curvilinear abscissa, which starts at zero at the coronary ostium.

mod classify;

pub use classify::{
    apply_override, classify_lad, classify_lcx, classify_rca, classify_tree,
    split_lca_candidates, BranchLabel, Classification, ClassificationOverride, ClassifyOptions,
    Dominance, LcaCandidates, RcaResult, ANTERIOR, POSTERIOR,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Default bifurcation detection tolerance (about one voxel).
pub const DEFAULT_BIFURCATION_TOL: f64 = 0.5;
/// Half width of the tangent kernel; the full window spans 1 cm.
pub const DEFAULT_HALF_KERNEL: f64 = 5.0;
/// Maximum distance between a centerline's first point and the tree ostium.
pub const OSTIUM_TOL: f64 = 1.0;

/// Cumulative arc length of a polyline, starting at zero.
pub fn arc_length_parameterize(points: &[Vec3]) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "a centerline needs at least 2 points, got {}",
            points.len()
        )));
    }
    let mut abscissa = Vec::with_capacity(points.len());
    abscissa.push(0.0);
    let mut total = 0.0;
    for (i, w) in points.windows(2).enumerate() {
        let step = (w[1] - w[0]).norm();
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::DegenerateGeometry(format!(
                "consecutive points {i} and {} coincide",
                i + 1
            )));
        }
        total += step;
        abscissa.push(total);
    }
    Ok(abscissa)
}

/// A 3D polyline with per-point lumen radius, abscissa and unit tangent.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    points: Vec<Vec3>,
    radius: Vec<f64>,
    abscissa: Vec<f64>,
    tangents: Vec<Vec3>,
}

impl Centerline {
    pub fn new(points: Vec<Vec3>, radius: Vec<f64>) -> Result<Self> {
        if radius.len() != points.len() {
            return Err(Error::DegenerateGeometry(format!(
                "{} points but {} radii",
                points.len(),
                radius.len()
            )));
        }
        if let Some(i) = radius.iter().position(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::DegenerateGeometry(format!(
                "radius at point {i} is not positive"
            )));
        }
        let abscissa = arc_length_parameterize(&points)?;
        let n = points.len();
        let tangents = (0..n)
            .map(|i| {
                let (a, b) = match i {
                    0 => (0, 1),
                    _ if i == n - 1 => (n - 2, n - 1),
                    _ => (i - 1, i + 1),
                };
                let d = points[b] - points[a];
                // a sharp reversal can cancel the central difference
                if d.norm() > 0.0 {
                    d.normalize()
                } else {
                    (points[i + 1] - points[i]).normalize()
                }
            })
            .collect();
        Ok(Self {
            points,
            radius,
            abscissa,
            tangents,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn radius(&self) -> &[f64] {
        &self.radius
    }

    pub fn abscissa(&self) -> &[f64] {
        &self.abscissa
    }

    pub fn tangents(&self) -> &[Vec3] {
        &self.tangents
    }

    /// Total arc length in mm.
    pub fn length(&self) -> f64 {
        *self.abscissa.last().expect("centerline has points")
    }

    /// Segment index `j` such that `abscissa[j] <= s <= abscissa[j + 1]`, and
    /// the interpolation weight along it. `s` is clamped to the centerline.
    fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.abscissa.len();
        if s <= 0.0 {
            return (0, 0.0);
        }
        if s >= self.length() {
            return (n - 2, 1.0);
        }
        let j = self.abscissa.partition_point(|&a| a <= s).saturating_sub(1).min(n - 2);
        let t = (s - self.abscissa[j]) / (self.abscissa[j + 1] - self.abscissa[j]);
        (j, t)
    }

    pub fn point_at(&self, s: f64) -> Vec3 {
        let (j, t) = self.locate(s);
        self.points[j] + (self.points[j + 1] - self.points[j]) * t
    }

    pub fn radius_at(&self, s: f64) -> f64 {
        let (j, t) = self.locate(s);
        self.radius[j] + (self.radius[j + 1] - self.radius[j]) * t
    }

    /// Index of the point closest to `p` (lowest index on ties).
    pub fn nearest_index(&self, p: &Vec3) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, q) in self.points.iter().enumerate() {
            let d = (q - p).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Polyline between abscissas `start` and `end` (clamped), with
    /// interpolated endpoints. Returns points, radii and abscissas.
    pub fn sub_path(&self, start: f64, end: f64) -> (Vec<Vec3>, Vec<f64>, Vec<f64>) {
        let start = start.clamp(0.0, self.length());
        let end = end.clamp(start, self.length());
        let mut pts = vec![self.point_at(start)];
        let mut rad = vec![self.radius_at(start)];
        let mut abs = vec![start];
        for i in 0..self.len() {
            let a = self.abscissa[i];
            if a > start && a < end {
                pts.push(self.points[i]);
                rad.push(self.radius[i]);
                abs.push(a);
            }
        }
        if end > start {
            pts.push(self.point_at(end));
            rad.push(self.radius_at(end));
            abs.push(end);
        }
        (pts, rad, abs)
    }

    /// Tube volume approximation `sum(pi * r_i^2 * (s_{i+1} - s_i))`.
    pub fn tube_volume(&self) -> f64 {
        self.abscissa
            .windows(2)
            .zip(&self.radius)
            .map(|(w, r)| std::f64::consts::PI * r * r * (w[1] - w[0]))
            .sum()
    }

    /// The centerline restricted to abscissa `[0, end]`.
    pub fn truncated(&self, end: f64) -> Result<Centerline> {
        let (pts, rad, _) = self.sub_path(0.0, end);
        Centerline::new(pts, rad)
    }

    /// Copy with every coordinate and radius multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Centerline> {
        Centerline::new(
            self.points.iter().map(|p| p * s).collect(),
            self.radius.iter().map(|r| r * s).collect(),
        )
    }

    /// Copy with `f` applied to every point.
    pub fn mapped(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Centerline> {
        Centerline::new(self.points.iter().map(f).collect(), self.radius.clone())
    }
}

/// Kernel-averaged unit tangents upstream and downstream of point `i`.
///
/// Each is the overlap-length weighted mean of the unit segment directions
/// inside `[s_i - half_kernel, s_i]` (resp. `[s_i, s_i + half_kernel]`).
pub fn kernel_tangent(c: &Centerline, i: usize, half_kernel: f64) -> Result<(Vec3, Vec3)> {
    if i == 0 || i + 1 >= c.len() {
        return Err(Error::InsufficientSupport {
            index: i,
            reason: "point is not interior to the centerline",
        });
    }
    let s = c.abscissa[i];
    let average = |lo: f64, hi: f64| {
        let mut acc = Vec3::zeros();
        for j in 0..c.len() - 1 {
            let (a, b) = (c.abscissa[j], c.abscissa[j + 1]);
            let overlap = b.min(hi) - a.max(lo);
            if overlap > 0.0 {
                acc += (c.points[j + 1] - c.points[j]).normalize() * overlap;
            }
        }
        acc
    };
    let up = average(s - half_kernel, s);
    let down = average(s, s + half_kernel);
    if !(up.norm() > 0.0) || !(down.norm() > 0.0) {
        return Err(Error::InsufficientSupport {
            index: i,
            reason: "tangent window is empty",
        });
    }
    Ok((up.normalize(), down.normalize()))
}

pub fn cosine_similarity(a: &Vec3, b: &Vec3) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0)
}

/// Local geometry of a centerline around a bifurcation node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationGeometry {
    /// Direction from the node to the centroid of the points distal to it.
    pub v_o: Vec3,
    /// Cosine similarity between `t_up` and `t_down`.
    pub s_c: f64,
    pub t_up: Vec3,
    pub t_down: Vec3,
}

impl BifurcationGeometry {
    pub fn at(c: &Centerline, node: &Vec3, half_kernel: f64) -> Result<Self> {
        let i = c.nearest_index(node);
        let (t_up, t_down) = kernel_tangent(c, i, half_kernel)?;
        Ok(Self {
            v_o: distal_direction(c, node),
            s_c: cosine_similarity(&t_up, &t_down),
            t_up,
            t_down,
        })
    }
}

/// `P_cm - node`, with `P_cm` the centroid of the points after the one
/// nearest to `node`. Zero when nothing lies distal to the node.
pub fn distal_direction(c: &Centerline, node: &Vec3) -> Vec3 {
    let k = c.nearest_index(node);
    let distal = &c.points[k + 1..];
    if distal.is_empty() {
        return Vec3::zeros();
    }
    let centroid = distal.iter().sum::<Vec3>() / distal.len() as f64;
    centroid - node
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// A node where two or more centerlines of a tree part ways.
#[derive(Debug, Clone, PartialEq)]
pub struct Bifurcation {
    pub position: Vec3,
    /// Abscissa of the node on the lowest-index participating centerline.
    pub abscissa: f64,
    /// Indices of the participating centerlines, ascending.
    pub centerlines: Vec<usize>,
}

/// All centerlines leaving one coronary ostium.
#[derive(Debug, Clone)]
pub struct CoronaryTree {
    pub side: Side,
    pub ostium: Vec3,
    pub centerlines: Vec<Centerline>,
    pub bifurcations: Vec<Bifurcation>,
    tol: f64,
    /// `divergence[a][b]`: abscissa on `a` of the last point shared with `b`.
    divergence: Vec<Vec<Option<f64>>>,
}

impl CoronaryTree {
    pub fn new(side: Side, ostium: Vec3, centerlines: Vec<Centerline>) -> Result<Self> {
        Self::with_tolerance(side, ostium, centerlines, DEFAULT_BIFURCATION_TOL)
    }

    pub fn with_tolerance(
        side: Side,
        ostium: Vec3,
        centerlines: Vec<Centerline>,
        tol: f64,
    ) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParams(format!(
                "bifurcation tolerance must be positive, got {tol}"
            )));
        }
        for (i, c) in centerlines.iter().enumerate() {
            let d = (c.points[0] - ostium).norm();
            if d >= OSTIUM_TOL {
                return Err(Error::DegenerateGeometry(format!(
                    "centerline {i} starts {d:.3} mm away from the ostium"
                )));
            }
        }
        let n = centerlines.len();
        let mut divergence = vec![vec![None; n]; n];
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    divergence[a][b] = last_shared_point(&centerlines[a], &centerlines[b], tol)
                        .map(|k| centerlines[a].abscissa[k]);
                }
            }
        }
        let bifurcations = find_bifurcations(&centerlines, tol);
        Ok(Self {
            side,
            ostium,
            centerlines,
            bifurcations,
            tol,
            divergence,
        })
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn len(&self) -> usize {
        self.centerlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centerlines.is_empty()
    }

    /// Abscissa on `a` where `a` and `b` part ways, if they overlap at all.
    pub fn divergence(&self, a: usize, b: usize) -> Option<f64> {
        self.divergence[a][b]
    }

    /// Same tree with `f` applied to every centerline and to the ostium.
    pub fn mapped(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        let centerlines = self
            .centerlines
            .iter()
            .map(|c| c.mapped(&f))
            .collect::<Result<Vec<_>>>()?;
        Self::with_tolerance(self.side, f(&self.ostium), centerlines, self.tol)
    }

    /// Same tree with coordinates and radii multiplied by `s`; the
    /// bifurcation tolerance scales along.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let centerlines = self
            .centerlines
            .iter()
            .map(|c| c.scaled(s))
            .collect::<Result<Vec<_>>>()?;
        Self::with_tolerance(self.side, self.ostium * s, centerlines, self.tol * s)
    }
}

/// Index on `a` of the last point of the initial run where `a` and `b`,
/// compared at equal abscissa, stay within `tol` of each other. `None` when
/// they do not start together or never separate.
pub fn last_shared_point(a: &Centerline, b: &Centerline, tol: f64) -> Option<usize> {
    let mut last = None;
    for (k, (p, &s)) in a.points.iter().zip(&a.abscissa).enumerate() {
        if s > b.length() {
            break;
        }
        if (p - b.point_at(s)).norm() <= tol {
            last = Some(k);
        } else {
            break;
        }
    }
    let k = last?;
    let b_end = b.length();
    if k + 1 == a.len() || (a.abscissa[k] - b_end).abs() <= tol {
        return None;
    }
    Some(k)
}

/// Bifurcation nodes of a set of centerlines sharing an ostium.
///
/// Every overlapping pair contributes the last point where the two stay
/// within `tol`; pair nodes closer than `2 * tol` merge into one bifurcation.
/// Output is sorted by abscissa.
pub fn find_bifurcations(centerlines: &[Centerline], tol: f64) -> Vec<Bifurcation> {
    let mut pairs = Vec::new();
    for a in 0..centerlines.len() {
        for b in a + 1..centerlines.len() {
            if let Some(k) = last_shared_point(&centerlines[a], &centerlines[b], tol) {
                let ca = &centerlines[a];
                pairs.push((ca.abscissa[k], ca.points[k], a, b));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)).then(x.3.cmp(&y.3)));

    let mut out: Vec<Bifurcation> = Vec::new();
    for (s, p, a, b) in pairs {
        match out
            .iter_mut()
            .find(|bif| (bif.position - p).norm() <= 2.0 * tol)
        {
            Some(bif) => {
                for idx in [a, b] {
                    if !bif.centerlines.contains(&idx) {
                        bif.centerlines.push(idx);
                    }
                }
                bif.centerlines.sort_unstable();
            }
            None => out.push(Bifurcation {
                position: p,
                abscissa: s,
                centerlines: vec![a, b],
            }),
        }
    }
    for bif in &mut out {
        let first = &centerlines[bif.centerlines[0]];
        bif.abscissa = first.abscissa[first.nearest_index(&bif.position)];
    }
    out.sort_by(|x, y| x.abscissa.total_cmp(&y.abscissa));
    out
}
