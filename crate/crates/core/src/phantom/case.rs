use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::profile::{LesionShape, LesionSpec, Ripple};
use super::tree::{gen_coronary_tree, TreeSpec, TreeTemplate, TreeTruth};
use super::volume::{paint_volume, GridSpec, HuSampler, PaintTube};
use crate::classifier::table::{write_functional_csv, FunctionalRecord};
use crate::classifier::Functional;
use crate::error::Result;
use crate::geometry::{BranchLabel, Centerline, CoronaryTree, Side, Vec3};
use crate::io;
use crate::pcat::{save_mask, save_volume, BinaryMask, HuWindow, VoxelVolume};

/// One synthetic patient side: tree with planted lesions, CT volume,
/// lumen mask and functional measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub seed: u64,
    pub side: Side,
    pub template: TreeTemplate,
    pub spacing_mm: f64,
    pub sampler: HuSampler,
    /// Range of planted lesion depths.
    pub depth: (f64, f64),
    pub ripple: Ripple,
    pub with_functional: bool,
}

impl CaseSpec {
    pub fn new(seed: u64, side: Side, template: TreeTemplate) -> Self {
        Self {
            seed,
            side,
            template,
            spacing_mm: 0.6,
            sampler: HuSampler::default_fat(),
            depth: (0.3, 0.7),
            ripple: Ripple::default(),
            with_functional: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseLesionTruth {
    pub branch: BranchLabel,
    pub centerline: usize,
    pub lesion: LesionSpec,
    /// Abscissas where the true SD crosses 0.10.
    pub sd10: Option<(f64, f64)>,
    pub functional: Functional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTruth {
    pub spec: CaseSpec,
    pub tree: TreeTruth,
    pub lesions: Vec<CaseLesionTruth>,
    /// Expected FAI of any ROI: the sampler mean restricted to the window.
    pub expected_fai: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PhantomCase {
    pub tree: CoronaryTree,
    pub volume: VoxelVolume,
    pub lumen: BinaryMask,
    pub functional: Vec<FunctionalRecord>,
    pub truth: CaseTruth,
}

fn lesion_window(label: BranchLabel, truth: &TreeTruth, length: f64) -> (f64, f64) {
    let lm = truth.lmca_bifurcation_mm.unwrap_or(0.0);
    match label {
        BranchLabel::Lad => (lm + 30.0, lm + 70.0),
        BranchLabel::Lcx => (lm + 22.0, (lm + 45.0).min(length - 25.0)),
        _ => (28.0, 55.0),
    }
}

/// Every cutoff sits at depth 0.5 on average.
fn functional_of(depth: f64, rng: &mut ChaCha8Rng) -> Functional {
    let n = |sd: f64, rng: &mut ChaCha8Rng| Normal::new(0.0, sd).expect("positive sd").sample(rng);
    Functional {
        vffr: Some((1.0 - 0.4 * depth + n(0.03, rng)).clamp(0.3, 1.0)),
        wss: Some((4.0 + 23.0 * depth + n(2.0, rng)).max(0.0)),
        dffr: Some((0.12 * depth + n(0.01, rng)).max(0.0)),
    }
}

pub fn gen_case(spec: &CaseSpec) -> Result<PhantomCase> {
    spec.sampler.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tree_spec = TreeSpec::new(rng.random(), spec.side, spec.template);
    let (tree, tree_truth) = gen_coronary_tree(&tree_spec)?;

    let mut lesions = Vec::new();
    for label in BranchLabel::major() {
        let Some(idx) = tree_truth.labels[label.as_str()] else { continue };
        let (lo, hi) = lesion_window(label, &tree_truth, tree.centerlines[idx].length());
        let shape = if rng.random::<bool>() {
            LesionShape::Gaussian
        } else {
            LesionShape::Cosine
        };
        let lesion = LesionSpec {
            center_mm: rng.random_range(lo..hi.max(lo + 1.0)),
            depth: rng.random_range(spec.depth.0..spec.depth.1),
            width_mm: rng.random_range(8.0..13.0),
            shape,
        };
        let functional = functional_of(lesion.depth, &mut rng);
        lesions.push(CaseLesionTruth {
            branch: label,
            centerline: idx,
            sd10: lesion.half_width_at(0.10).map(|h| (lesion.center_mm - h, lesion.center_mm + h)),
            lesion,
            functional,
        });
    }

    let phase = rng.random_range(0.0..2.0 * PI);
    let ripple = |s: f64| 1.0 + spec.ripple.amplitude * (2.0 * PI * s / spec.ripple.wavelength_mm + phase).cos();
    let mut healthy_all = Vec::with_capacity(tree.len());
    let mut centerlines = Vec::with_capacity(tree.len());
    for c in &tree.centerlines {
        let mut healthy = Vec::with_capacity(c.len());
        let mut radius = Vec::with_capacity(c.len());
        for k in 0..c.len() {
            let s = c.abscissa()[k];
            let h = c.radius()[k] * ripple(s);
            let mut r = h;
            for l in &lesions {
                let host = &tree.centerlines[l.centerline];
                if k < host.len() && host.points()[k] == c.points()[k] {
                    r *= 1.0 - l.lesion.depth * l.lesion.shape_at(s);
                }
            }
            healthy.push(h);
            radius.push(r);
        }
        centerlines.push(Centerline::new(c.points().to_vec(), radius)?);
        healthy_all.push(healthy);
    }
    let tree = CoronaryTree::with_tolerance(tree.side, tree.ostium, centerlines, tree.tolerance())?;

    let margin = 2.0;
    let tubes: Vec<PaintTube> = tree
        .centerlines
        .iter()
        .zip(&healthy_all)
        .map(|(c, h)| PaintTube {
            points: c.points().to_vec(),
            lumen: c.radius().to_vec(),
            fat: h.iter().map(|r| 3.3 * r + margin).collect(),
        })
        .collect();
    let reach = tubes
        .iter()
        .flat_map(|t| t.fat.iter().copied())
        .fold(0.0, f64::max)
        + 1.0;
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for c in &tree.centerlines {
        for p in c.points() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
    }
    let grid = GridSpec::covering(&(lo - Vec3::repeat(reach)), &(hi + Vec3::repeat(reach)), spec.spacing_mm).grid()?;
    let (volume, lumen) = paint_volume(&grid, &tubes, &spec.sampler, 300, 50, rng.random())?;

    let mut flags = Vec::new();
    if spec.spacing_mm > 1.0 {
        flags.push(format!("grid spacing {} mm is coarser than 1 mm", spec.spacing_mm));
    }
    let functional = if spec.with_functional {
        lesions
            .iter()
            .map(|l| FunctionalRecord {
                branch: l.branch.as_str().to_string(),
                position_mm: l.lesion.center_mm,
                functional: l.functional,
            })
            .collect()
    } else {
        Vec::new()
    };
    let truth = CaseTruth {
        spec: spec.clone(),
        tree: tree_truth,
        lesions,
        expected_fai: spec.sampler.in_window_mean(&HuWindow::default()),
        flags,
    };
    Ok(PhantomCase {
        tree,
        volume,
        lumen,
        functional,
        truth,
    })
}

/// File names inside a case directory.
pub mod files {
    pub const LEFT_TREE: &str = "left.json";
    pub const RIGHT_TREE: &str = "right.json";
    pub const VOLUME: &str = "ct";
    pub const LUMEN: &str = "lumen";
    pub const FUNCTIONAL: &str = "functional.csv";
    pub const TRUTH: &str = "truth.json";
}

/// Writes centerlines, volume pair, lumen mask, functional CSV and truth.
pub fn write_case(dir: &Path, case: &PhantomCase, config_hash: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let tree_file = match case.tree.side {
        Side::Left => files::LEFT_TREE,
        Side::Right => files::RIGHT_TREE,
    };
    io::write_tree(&dir.join(tree_file), &case.tree)?;
    save_volume(&dir.join(files::VOLUME), &case.volume)?;
    save_mask(&dir.join(files::LUMEN), &case.lumen)?;
    if !case.functional.is_empty() {
        write_functional_csv(&dir.join(files::FUNCTIONAL), config_hash, &case.functional)?;
    }
    io::write_json(&dir.join(files::TRUTH), &case.truth)
}
