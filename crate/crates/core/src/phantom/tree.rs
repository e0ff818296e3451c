use std::collections::BTreeMap;

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{BranchLabel, Centerline, CoronaryTree, Dominance, Side, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeTemplate {
    RightDominant,
    LeftDominant,
    Codominant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub seed: u64,
    pub side: Side,
    /// Dominance pattern of right trees; ignored for left trees.
    pub template: TreeTemplate,
    /// Draw caliber and direction parameters close to the decision
    /// boundaries instead of well clear of them.
    pub ambiguous: bool,
    pub step_mm: f64,
    pub ostium: [f64; 3],
}

impl TreeSpec {
    pub fn new(seed: u64, side: Side, template: TreeTemplate) -> Self {
        Self {
            seed,
            side,
            template,
            ambiguous: false,
            step_mm: 0.5,
            ostium: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationTruth {
    pub abscissa: f64,
    pub position: [f64; 3],
    /// Every centerline passing through the node, ascending.
    pub centerlines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeTruth {
    pub side: Side,
    pub template: Option<TreeTemplate>,
    pub ambiguous: bool,
    /// Anatomical name of every centerline, in output order.
    pub names: Vec<String>,
    pub labels: BTreeMap<String, Option<usize>>,
    pub dominance: Dominance,
    pub rca_end_mm: Option<f64>,
    pub lmca_bifurcation_mm: Option<f64>,
    pub lad_candidates: Vec<usize>,
    pub lcx_candidates: Vec<usize>,
    /// Distal caliber difference of the two longest right centerlines.
    pub rel_diff: Option<f64>,
    pub bifurcations: Vec<BifurcationTruth>,
}

const FUNNEL_MM: f64 = 30.0;

struct Line {
    name: &'static str,
    points: Vec<Vec3>,
    radius: Vec<f64>,
}

struct Builder {
    step: f64,
    lines: Vec<Line>,
}

/// Unit vector `d` rotated by `angle` toward `toward`.
fn tilt(d: &Vec3, toward: &Vec3, angle: f64) -> Vec3 {
    let d = d.normalize();
    let e = (toward - d * toward.dot(&d)).normalize();
    d * angle.cos() + e * angle.sin()
}

impl Builder {
    /// Path of `length` mm starting after `start`, turning toward `bend_to`
    /// at `rate` rad/mm.
    fn grow(&self, start: &Vec3, dir: Vec3, bend_to: Vec3, rate: f64, length: f64) -> Vec<Vec3> {
        let n = (length / self.step).round() as usize;
        let mut d = dir.normalize();
        let mut p = *start;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            p += d * self.step;
            out.push(p);
            let axis = d.cross(&bend_to);
            if rate != 0.0 && axis.norm() > 1e-9 {
                d = Rotation3::from_axis_angle(&Unit::new_normalize(axis), rate * self.step) * d;
            }
        }
        out
    }

    fn taper(n: usize, r0: f64, r1: f64) -> Vec<f64> {
        (0..n)
            .map(|i| r0 + (r1 - r0) * (i + 1) as f64 / n as f64)
            .collect()
    }

    fn root(&mut self, name: &'static str, ostium: Vec3, path: Vec<Vec3>, r0: f64, r1: f64) -> usize {
        let mut points = vec![ostium];
        let mut radius = vec![r0];
        radius.extend(Self::taper(path.len(), r0, r1));
        points.extend(path);
        self.lines.push(Line {
            name,
            points,
            radius,
        });
        self.lines.len() - 1
    }

    /// Node index on `parent` closest to abscissa `s`.
    fn node(&self, parent: usize, s: f64) -> usize {
        ((s / self.step).round() as usize).min(self.lines[parent].points.len() - 2)
    }

    fn tangent(&self, line: usize, k: usize) -> Vec3 {
        let p = &self.lines[line].points;
        (p[k + 1] - p[k.saturating_sub(1)]).normalize()
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        &mut self,
        name: &'static str,
        parent: usize,
        k: usize,
        dir: Vec3,
        bend_to: Vec3,
        rate: f64,
        length: f64,
        r0: f64,
        r1: f64,
    ) -> usize {
        let start = self.lines[parent].points[k];
        let path = self.grow(&start, dir, bend_to, rate, length);
        let mut points = self.lines[parent].points[..=k].to_vec();
        let mut radius = self.lines[parent].radius[..=k].to_vec();
        radius.extend(Self::taper(path.len(), r0, r1));
        points.extend(path);
        self.lines.push(Line {
            name,
            points,
            radius,
        });
        self.lines.len() - 1
    }

    /// Blends the radius after node `k` from the parent caliber into the
    /// line's own taper over `len` mm, so the junction has no step.
    fn funnel(&mut self, line: usize, k: usize, len: f64) {
        let step = self.step;
        let radius = &mut self.lines[line].radius;
        let r_k = radius[k];
        for (i, r) in radius.iter_mut().enumerate().skip(k + 1) {
            let s = (i - k) as f64 * step;
            if s >= len {
                break;
            }
            let w = 0.5 * (1.0 + (std::f64::consts::PI * s / len).cos());
            *r = w * r_k + (1.0 - w) * *r;
        }
    }

    fn length(&self, line: usize) -> f64 {
        (self.lines[line].points.len() - 1) as f64 * self.step
    }

    fn mean_distal_diameter(&self, line: usize, from: usize) -> f64 {
        let r = &self.lines[line].radius[from..];
        2.0 * r.iter().sum::<f64>() / r.len() as f64
    }
}

struct Built {
    builder: Builder,
    side: Side,
    template: Option<TreeTemplate>,
    dominance: Dominance,
    /// Builder line index per major label.
    majors: Vec<(BranchLabel, usize)>,
    rca_end_k: Option<usize>,
    lmca_k: Option<usize>,
    lad_group: Vec<usize>,
    nodes: Vec<(usize, usize)>,
    rel_diff: Option<f64>,
}

fn build_left(spec: &TreeSpec, rng: &mut ChaCha8Rng) -> Built {
    let mut b = Builder {
        step: spec.step_mm,
        lines: Vec::new(),
    };
    let ostium = Vec3::from(spec.ostium);
    let inferior = Vec3::new(0.0, 0.0, -1.0);
    let lateral = Vec3::new(1.0, 0.0, 0.0);
    let posterior = Vec3::new(0.0, 1.0, 0.0);

    let lm_len = rng.random_range(8.0..14.0);
    let lm_path = b.grow(&ostium, Vec3::new(1.0, 0.1, -0.3), inferior, 0.0, lm_len);
    let lm_k = lm_path.len();
    let lad_len = rng.random_range(100.0..130.0);
    let mut lad_path = lm_path.clone();
    let node = *lm_path.last().expect("left main has points");
    lad_path.extend(b.grow(&node, Vec3::new(0.35, -1.0, -0.45), inferior, 0.004, lad_len));
    let lad = b.root("LAD", ostium, lad_path, 2.2, 1.0);
    // keep the left main caliber constant
    for r in b.lines[lad].radius[..=lm_k].iter_mut() {
        *r = 2.2;
    }
    let lm_s = lm_k as f64 * spec.step_mm;

    let (lcx_bend_to, lcx_rate) = if spec.ambiguous {
        (lateral, 0.012)
    } else {
        (inferior, 0.005)
    };
    let lcx_len = rng.random_range(55.0..85.0);
    let lcx = b.branch("LCx", lad, lm_k, Vec3::new(0.5, 1.0, -0.35), lcx_bend_to, lcx_rate, lcx_len, 2.1, 1.0);
    b.funnel(lcx, lm_k, FUNNEL_MM);

    let mut nodes = vec![(lad, lm_k)];
    let d1_s = lm_s + rng.random_range(18.0..28.0);
    let d2_s = lm_s + rng.random_range(45.0..60.0);
    let mut diagonals = Vec::new();
    for (name, s) in [("D1", d1_s), ("D2", d2_s)] {
        let k = b.node(lad, s);
        let t = b.tangent(lad, k);
        let angle = rng.random_range(45f64..60.0).to_radians();
        let dir = tilt(&t, &(lateral + inferior * 0.3), angle);
        let len = rng.random_range(45.0..65.0);
        diagonals.push(b.branch(name, lad, k, dir, inferior, 0.003, len, 1.1, 0.7));
        nodes.push((lad, k));
    }

    let om_count = if rng.random::<bool>() { 2 } else { 1 };
    let mut oms = Vec::new();
    for m in 0..om_count {
        let s = lm_s + rng.random_range(15.0..28.0) + 22.0 * m as f64;
        let k = b.node(lcx, s);
        let t = b.tangent(lcx, k);
        let (dir, r0) = if spec.ambiguous {
            (tilt(&t, &posterior, rng.random_range(15f64..30.0).to_radians()), 1.5)
        } else {
            (tilt(&t, &(inferior - posterior * 0.3), rng.random_range(45f64..60.0).to_radians()), 1.0)
        };
        let len = rng.random_range(30.0..45.0);
        let name = if m == 0 { "OM1" } else { "OM2" };
        oms.push(b.branch(name, lcx, k, dir, inferior, 0.0, len, r0, 0.7));
        nodes.push((lcx, k));
    }
    let mut lad_group = vec![lad];
    lad_group.extend(&diagonals);
    Built {
        builder: b,
        side: Side::Left,
        template: None,
        dominance: Dominance::Unknown,
        majors: vec![(BranchLabel::Lad, lad), (BranchLabel::Lcx, lcx)],
        rca_end_k: None,
        lmca_k: Some(lm_k),
        lad_group,
        nodes,
        rel_diff: None,
    }
}

fn build_right(spec: &TreeSpec, rng: &mut ChaCha8Rng) -> Built {
    let mut b = Builder {
        step: spec.step_mm,
        lines: Vec::new(),
    };
    let ostium = Vec3::from(spec.ostium);
    let inferior = Vec3::new(0.0, 0.0, -1.0);
    let anterior = Vec3::new(0.0, -1.0, 0.0);
    let first_dir = Vec3::new(-1.0, -0.4, -0.2);
    let mut nodes = Vec::new();

    let (lines, majors, rca_end_k, rel_diff, dominance) = match spec.template {
        TreeTemplate::RightDominant | TreeTemplate::Codominant => {
            let trunk_len = rng.random_range(75.0..95.0);
            let trunk = b.grow(&ostium, first_dir, inferior, 0.012, trunk_len);
            let crux_k = trunk.len();
            let pda_len = rng.random_range(35.0..55.0);
            let plb_len = pda_len + rng.random_range(6.0..15.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let pda_r = rng.random_range(1.2..1.4);
            let ratio = if spec.ambiguous {
                rng.random_range(1.33..1.47)
            } else if spec.template == TreeTemplate::Codominant {
                rng.random_range(1.0..1.05)
            } else {
                rng.random_range(1.0..1.15)
            };
            let plb_r = if rng.random::<bool>() { pda_r * ratio } else { pda_r / ratio };
            let main = b.root("RCA_PDA", ostium, trunk.clone(), 2.0, 1.6);
            // truncate to the crux and regrow as PDA
            b.lines[main].points.truncate(crux_k + 1);
            b.lines[main].radius.truncate(crux_k + 1);
            let t = b.tangent(main, crux_k - 1);
            let u = t.cross(&Vec3::new(0.0, 1.0, 0.0)).normalize();
            let crux = b.lines[main].points[crux_k];
            let pda_path = b.grow(&crux, tilt(&t, &u, 35f64.to_radians()), inferior, 0.004, pda_len);
            let n = pda_path.len();
            b.lines[main].points.extend(pda_path);
            b.lines[main].radius.extend(Builder::taper(n, pda_r, pda_r * 0.8));
            let plb = b.branch("PLB", main, crux_k, tilt(&t, &(-u), 35f64.to_radians()), inferior, 0.004, plb_len, plb_r, plb_r * 0.8);
            b.funnel(main, crux_k, FUNNEL_MM);
            b.funnel(plb, crux_k, FUNNEL_MM);
            nodes.push((main, crux_k));
            let longest = if b.length(plb) > b.length(main) { plb } else { main };
            let other = if longest == main { plb } else { main };
            let rel = {
                let d1 = b.mean_distal_diameter(longest, crux_k + 1);
                let d2 = b.mean_distal_diameter(other, crux_k + 1);
                (d1 - d2).abs() / d1.min(d2)
            };
            (vec![main, plb], vec![(BranchLabel::Rca, longest)], Some(crux_k), Some(rel), Dominance::Right)
        }
        TreeTemplate::LeftDominant => {
            let rca_len = rng.random_range(95.0..120.0);
            let path = b.grow(&ostium, first_dir, inferior, 0.010, rca_len);
            let rca = b.root("RCA", ostium, path, 1.8, 1.3);
            (vec![rca], vec![(BranchLabel::Rca, rca)], None, None, Dominance::Left)
        }
    };
    let trunk = lines[0];
    let amb_k = b.node(trunk, rng.random_range(35.0..48.0));
    let amb_len = match spec.template {
        TreeTemplate::LeftDominant => rng.random_range(35.0..50.0),
        _ => rng.random_range(20.0..30.0),
    };
    let amb_r = match (spec.template, spec.ambiguous) {
        (TreeTemplate::LeftDominant, false) => rng.random_range(0.6..0.8),
        (TreeTemplate::LeftDominant, true) => rng.random_range(1.05..1.2),
        _ => rng.random_range(0.7..0.9),
    };
    let t = b.tangent(trunk, amb_k);
    let amb = b.branch("AMB", trunk, amb_k, tilt(&t, &anterior, 60f64.to_radians()), inferior, 0.0, amb_len, amb_r, amb_r * 0.75);
    nodes.push((trunk, amb_k));
    let rv_k = b.node(trunk, rng.random_range(12.0..20.0));
    let t = b.tangent(trunk, rv_k);
    b.branch("RV", trunk, rv_k, tilt(&t, &(anterior + Vec3::new(0.0, 0.0, 0.5)), 70f64.to_radians()), inferior, 0.0, rng.random_range(10.0..18.0), 0.7, 0.5);
    nodes.push((trunk, rv_k));

    let rel_diff = match spec.template {
        TreeTemplate::LeftDominant => {
            let d1 = b.mean_distal_diameter(trunk, amb_k + 1);
            let d2 = b.mean_distal_diameter(amb, amb_k + 1);
            Some((d1 - d2).abs() / d1.min(d2))
        }
        _ => rel_diff,
    };
    Built {
        builder: b,
        side: Side::Right,
        template: Some(spec.template),
        dominance,
        majors,
        rca_end_k,
        lmca_k: None,
        lad_group: Vec::new(),
        nodes,
        rel_diff,
    }
}

/// Seeded coronary tree whose anatomy satisfies the classification rules
/// by construction, with the expected labels.
pub fn gen_coronary_tree(spec: &TreeSpec) -> Result<(CoronaryTree, TreeTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let built = match spec.side {
        Side::Left => build_left(spec, &mut rng),
        Side::Right => build_right(spec, &mut rng),
    };
    let n = built.builder.lines.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    // order[out] = builder index; pos[builder] = output index
    let mut pos = vec![0; n];
    for (out, &bi) in order.iter().enumerate() {
        pos[bi] = out;
    }
    let lines = &built.builder.lines;
    let centerlines = order
        .iter()
        .map(|&bi| Centerline::new(lines[bi].points.clone(), lines[bi].radius.clone()))
        .collect::<Result<Vec<_>>>()?;
    let tree = CoronaryTree::new(spec.side, Vec3::from(spec.ostium), centerlines)?;

    let mut labels: BTreeMap<String, Option<usize>> = BranchLabel::major()
        .iter()
        .map(|l| (l.as_str().to_string(), None))
        .collect();
    for (label, bi) in &built.majors {
        labels.insert(label.as_str().to_string(), Some(pos[*bi]));
    }
    let step = spec.step_mm;
    let mut bifurcations: Vec<BifurcationTruth> = Vec::new();
    for &(parent, k) in &built.nodes {
        let node = lines[parent].points[k];
        let mut members: Vec<usize> = (0..n)
            .filter(|&bi| lines[bi].points.len() > k + 1 && lines[bi].points[..=k] == lines[parent].points[..=k])
            .map(|bi| pos[bi])
            .collect();
        members.sort_unstable();
        if !bifurcations.iter().any(|b| b.position == [node.x, node.y, node.z]) {
            bifurcations.push(BifurcationTruth {
                abscissa: k as f64 * step,
                position: [node.x, node.y, node.z],
                centerlines: members,
            });
        }
    }
    bifurcations.sort_by(|a, b| a.abscissa.total_cmp(&b.abscissa));

    let (mut lad_candidates, mut lcx_candidates) = (Vec::new(), Vec::new());
    if spec.side == Side::Left {
        for bi in 0..n {
            if built.lad_group.contains(&bi) {
                lad_candidates.push(pos[bi]);
            } else {
                lcx_candidates.push(pos[bi]);
            }
        }
        lad_candidates.sort_unstable();
        lcx_candidates.sort_unstable();
    }
    let truth = TreeTruth {
        side: built.side,
        template: built.template,
        ambiguous: spec.ambiguous,
        names: order.iter().map(|&bi| lines[bi].name.to_string()).collect(),
        labels,
        dominance: built.dominance,
        rca_end_mm: built.rca_end_k.map(|k| k as f64 * step),
        lmca_bifurcation_mm: built.lmca_k.map(|k| k as f64 * step),
        lad_candidates,
        lcx_candidates,
        rel_diff: built.rel_diff,
        bifurcations,
    };
    Ok((tree, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{classify_tree, split_lca_candidates, ClassifyOptions};

    #[test]
    fn right_templates_straddle_the_caliber_threshold() {
        for seed in 0..20 {
            let (_, t) = gen_coronary_tree(&TreeSpec::new(seed, Side::Right, TreeTemplate::RightDominant)).unwrap();
            assert!(t.rel_diff.unwrap() <= 0.4);
            let (_, t) = gen_coronary_tree(&TreeSpec::new(seed, Side::Right, TreeTemplate::LeftDominant)).unwrap();
            assert!(t.rel_diff.unwrap() > 0.4);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for side in [Side::Left, Side::Right] {
            let spec = TreeSpec::new(42, side, TreeTemplate::Codominant);
            let (a, ta) = gen_coronary_tree(&spec).unwrap();
            let (b, tb) = gen_coronary_tree(&spec).unwrap();
            assert_eq!(ta, tb);
            for (x, y) in a.centerlines.iter().zip(&b.centerlines) {
                assert_eq!(x.points(), y.points());
                assert_eq!(x.radius(), y.radius());
            }
        }
    }

    #[test]
    fn detected_bifurcations_match_truth() {
        for seed in 0..10 {
            let (tree, truth) = gen_coronary_tree(&TreeSpec::new(seed, Side::Left, TreeTemplate::RightDominant)).unwrap();
            assert_eq!(tree.bifurcations.len(), truth.bifurcations.len(), "seed {seed}");
            for (got, want) in tree.bifurcations.iter().zip(&truth.bifurcations) {
                assert!((got.abscissa - want.abscissa).abs() <= 2.0 * tree.tolerance(), "seed {seed}");
                assert_eq!(got.centerlines, want.centerlines, "seed {seed}");
            }
        }
    }

    #[test]
    fn left_candidates_and_labels_match_truth() {
        for seed in 0..10 {
            let (tree, truth) = gen_coronary_tree(&TreeSpec::new(seed, Side::Left, TreeTemplate::RightDominant)).unwrap();
            let c = split_lca_candidates(&tree).unwrap();
            assert_eq!(c.lad, truth.lad_candidates, "seed {seed}");
            assert_eq!(c.lcx, truth.lcx_candidates, "seed {seed}");
            let cls = classify_tree(&tree, &ClassifyOptions::default()).unwrap();
            assert_eq!(cls.labels, truth.labels, "seed {seed}");
        }
    }
}
