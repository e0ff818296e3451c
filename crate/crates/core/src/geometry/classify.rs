//! Rule-based identification of RCA, LAD and LCx.
//!
//! Right tree: the two longest centerlines are compared by their mean distal
//! caliber to decide dominance and where the RCA ends. Left tree: centerlines
//! are split into anterior (LAD) and posterior (LCx) candidates by the
//! direction from the first bifurcation to their distal centroid; the LAD is
//! the smoothest path through the candidate bifurcations and the LCx the more
//! posterior of the two bulkiest candidates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    cosine_similarity, distal_direction, kernel_tangent, CoronaryTree, Side, Vec3,
    DEFAULT_HALF_KERNEL,
};
use crate::error::{Error, Result};

/// Anterior direction in LPS.
pub const ANTERIOR: Vec3 = Vec3::new(0.0, -1.0, 0.0);
/// Posterior direction in LPS.
pub const POSTERIOR: Vec3 = Vec3::new(0.0, 1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchLabel {
    #[serde(rename = "RCA")]
    Rca,
    #[serde(rename = "LAD")]
    Lad,
    #[serde(rename = "LCx")]
    Lcx,
    #[serde(rename = "AMB")]
    Amb,
    #[serde(rename = "PDA_PLB")]
    PdaPlb,
    #[serde(rename = "UNCLASSIFIED")]
    Unclassified,
}

impl BranchLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Rca => "RCA",
            Self::Lad => "LAD",
            Self::Lcx => "LCx",
            Self::Amb => "AMB",
            Self::PdaPlb => "PDA_PLB",
            Self::Unclassified => "UNCLASSIFIED",
        }
    }

    pub fn major() -> [BranchLabel; 3] {
        [Self::Rca, Self::Lad, Self::Lcx]
    }
}

impl std::fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BranchLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "RCA" => Self::Rca,
            "LAD" => Self::Lad,
            "LCx" | "LCX" => Self::Lcx,
            "AMB" => Self::Amb,
            "PDA_PLB" => Self::PdaPlb,
            "UNCLASSIFIED" => Self::Unclassified,
            other => return Err(Error::InvalidInput(format!("unknown branch label `{other}`"))),
        })
    }
}

/// Coronary dominance. The caliber rule cannot tell right dominance from
/// codominance, so both are reported as `Right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dominance {
    Right,
    Left,
    Codominant,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Relative distal caliber difference above which the RCA is left dominant.
    pub rel_diff_threshold: f64,
    /// Minimum total length of a LAD candidate, mm.
    pub min_lad_length: f64,
    pub half_kernel: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            rel_diff_threshold: 0.40,
            min_lad_length: 80.0,
            half_kernel: DEFAULT_HALF_KERNEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcaResult {
    pub rca: usize,
    pub labels: Vec<BranchLabel>,
    pub dominance: Dominance,
    /// `|d1 - d2| / min(d1, d2)` of the two longest centerlines' distal calibers.
    pub rel_diff: Option<f64>,
    /// Abscissa where the RCA ends when it splits into PDA/PLB.
    pub end_abscissa: Option<f64>,
}

/// RCA identification on a right tree.
pub fn classify_rca(tree: &CoronaryTree, opts: &ClassifyOptions) -> Result<RcaResult> {
    if tree.is_empty() {
        return Err(Error::EmptyTree);
    }
    let n = tree.len();
    let mut labels = vec![BranchLabel::Unclassified; n];
    if n == 1 {
        labels[0] = BranchLabel::Rca;
        return Ok(RcaResult {
            rca: 0,
            labels,
            dominance: Dominance::Unknown,
            rel_diff: None,
            end_abscissa: None,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        tree.centerlines[b]
            .length()
            .total_cmp(&tree.centerlines[a].length())
            .then(a.cmp(&b))
    });
    let (a, b) = (order[0], order[1]);
    let split_a = tree.divergence(a, b).unwrap_or(0.0);
    let split_b = tree.divergence(b, a).unwrap_or(0.0);
    let da = mean_distal_diameter(&tree.centerlines[a], split_a);
    let db = mean_distal_diameter(&tree.centerlines[b], split_b);
    let rel_diff = (da - db).abs() / da.min(db);

    if rel_diff > opts.rel_diff_threshold {
        let (rca, amb) = if db > da { (b, a) } else { (a, b) };
        labels[rca] = BranchLabel::Rca;
        labels[amb] = BranchLabel::Amb;
        Ok(RcaResult {
            rca,
            labels,
            dominance: Dominance::Left,
            rel_diff: Some(rel_diff),
            end_abscissa: None,
        })
    } else {
        labels[a] = BranchLabel::Rca;
        labels[b] = BranchLabel::PdaPlb;
        Ok(RcaResult {
            rca: a,
            labels,
            dominance: Dominance::Right,
            rel_diff: Some(rel_diff),
            end_abscissa: Some(split_a),
        })
    }
}

/// Mean of `2 r` over the points strictly distal to `split`.
fn mean_distal_diameter(c: &super::Centerline, split: f64) -> f64 {
    let distal: Vec<f64> = c
        .abscissa()
        .iter()
        .zip(c.radius())
        .filter(|(s, _)| **s > split)
        .map(|(_, r)| 2.0 * r)
        .collect();
    if distal.is_empty() {
        2.0 * c.radius()[c.len() - 1]
    } else {
        distal.iter().sum::<f64>() / distal.len() as f64
    }
}

/// Left-tree split into LAD and LCx candidates around the first bifurcation.
#[derive(Debug, Clone, PartialEq)]
pub struct LcaCandidates {
    pub p_bif: Vec3,
    pub bif_abscissa: f64,
    pub lad: Vec<usize>,
    pub lcx: Vec<usize>,
    /// Direction from `p_bif` to each centerline's distal centroid.
    pub v_o: Vec<Vec3>,
}

pub fn split_lca_candidates(tree: &CoronaryTree) -> Result<LcaCandidates> {
    if tree.is_empty() {
        return Err(Error::EmptyTree);
    }
    let (p_bif, bif_abscissa) = match tree.bifurcations.first() {
        Some(b) => (b.position, b.abscissa),
        None => (tree.centerlines[0].points()[0], 0.0),
    };
    let mut lad = Vec::new();
    let mut lcx = Vec::new();
    let mut v_o = Vec::with_capacity(tree.len());
    for (i, c) in tree.centerlines.iter().enumerate() {
        let v = distal_direction(c, &p_bif);
        let (to_a, to_p) = if v.norm() > 0.0 {
            (cosine_similarity(&v, &ANTERIOR), cosine_similarity(&v, &POSTERIOR))
        } else {
            (0.0, 0.0)
        };
        if to_a > to_p {
            lad.push(i);
        } else {
            lcx.push(i);
        }
        v_o.push(v);
    }
    Ok(LcaCandidates {
        p_bif,
        bif_abscissa,
        lad,
        lcx,
        v_o,
    })
}

/// LAD selection: length filter, then at every bifurcation keep the outgoing
/// path with the highest cosine similarity of the kernel tangents.
pub fn classify_lad(
    tree: &CoronaryTree,
    cands: &LcaCandidates,
    opts: &ClassifyOptions,
) -> Result<usize> {
    let mut survivors: Vec<usize> = cands
        .lad
        .iter()
        .copied()
        .filter(|&i| tree.centerlines[i].length() >= opts.min_lad_length)
        .collect();
    if survivors.is_empty() {
        return Err(Error::ClassificationFailed {
            branch: "LAD",
            reason: format!(
                "no anterior candidate reaches {} mm (candidates: {:?})",
                opts.min_lad_length, cands.lad
            ),
        });
    }
    let tol = tree.tolerance();
    for bif in &tree.bifurcations {
        if bif.abscissa < cands.bif_abscissa - tol {
            continue;
        }
        let here: Vec<usize> = bif
            .centerlines
            .iter()
            .copied()
            .filter(|i| survivors.contains(i))
            .collect();
        if here.len() < 2 {
            continue;
        }
        // centerlines that keep running together past this node form one path
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &i in &here {
            let joined = groups.iter_mut().find(|g| {
                g.iter().any(|&j| {
                    tree.divergence(i, j)
                        .map_or(false, |s| s > bif.abscissa + 2.0 * tol)
                })
            });
            match joined {
                Some(g) => g.push(i),
                None => groups.push(vec![i]),
            }
        }
        if groups.len() < 2 {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for (g, members) in groups.iter().enumerate() {
            let c = &tree.centerlines[members[0]];
            let k = c.nearest_index(&bif.position);
            let s_c = match kernel_tangent(c, k, opts.half_kernel) {
                Ok((up, down)) => cosine_similarity(&up, &down),
                Err(_) => -1.0,
            };
            if best.map_or(true, |(b, _)| s_c > b) {
                best = Some((s_c, g));
            }
        }
        let keep = &groups[best.expect("at least two groups").1];
        survivors.retain(|i| !here.contains(i) || keep.contains(i));
    }
    survivors.sort_by(|&a, &b| {
        tree.centerlines[b]
            .length()
            .total_cmp(&tree.centerlines[a].length())
            .then(a.cmp(&b))
    });
    Ok(survivors[0])
}

/// LCx selection: the more posterior-pointing of the two largest-volume
/// candidates.
pub fn classify_lcx(tree: &CoronaryTree, cands: &LcaCandidates) -> Result<usize> {
    if cands.lcx.is_empty() {
        return Err(Error::ClassificationFailed {
            branch: "LCx",
            reason: "no posterior candidate".into(),
        });
    }
    let mut by_volume: Vec<(f64, usize)> = cands
        .lcx
        .iter()
        .map(|&i| (tree.centerlines[i].tube_volume(), i))
        .collect();
    by_volume.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut best: Option<(f64, usize)> = None;
    for &(_, i) in by_volume.iter().take(2) {
        let v = cands.v_o[i];
        let align = if v.norm() > 0.0 {
            cosine_similarity(&v, &POSTERIOR)
        } else {
            -1.0
        };
        if best.map_or(true, |(b, _)| align > b) {
            best = Some((align, i));
        }
    }
    Ok(best.expect("non-empty").1)
}

/// Labels of one tree. Either every major branch of the tree's side is
/// labelled or classification returns an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub side: Side,
    /// Major branch label -> centerline index (`None` for the other side).
    pub labels: BTreeMap<String, Option<usize>>,
    pub dominance: Dominance,
    /// Label of every centerline, in input order.
    pub branch_labels: Vec<BranchLabel>,
    /// Where the RCA ends when it splits into PDA/PLB, mm.
    pub rca_end_mm: Option<f64>,
    /// Abscissa of the first left bifurcation, mm.
    pub lmca_bifurcation_mm: Option<f64>,
}

impl Classification {
    pub fn index_of(&self, label: BranchLabel) -> Option<usize> {
        self.labels.get(label.as_str()).copied().flatten()
    }

    /// Labelled major branches present in this tree, in RCA, LAD, LCx order.
    pub fn major_branches(&self) -> Vec<(BranchLabel, usize)> {
        BranchLabel::major()
            .into_iter()
            .filter_map(|l| self.index_of(l).map(|i| (l, i)))
            .collect()
    }
}

fn empty_labels() -> BTreeMap<String, Option<usize>> {
    BranchLabel::major()
        .iter()
        .map(|l| (l.as_str().to_string(), None))
        .collect()
}

pub fn classify_tree(tree: &CoronaryTree, opts: &ClassifyOptions) -> Result<Classification> {
    let mut labels = empty_labels();
    match tree.side {
        Side::Right => {
            let rca = classify_rca(tree, opts)?;
            labels.insert("RCA".into(), Some(rca.rca));
            Ok(Classification {
                side: Side::Right,
                labels,
                dominance: rca.dominance,
                branch_labels: rca.labels,
                rca_end_mm: rca.end_abscissa,
                lmca_bifurcation_mm: None,
            })
        }
        Side::Left => {
            let cands = split_lca_candidates(tree)?;
            let lad = classify_lad(tree, &cands, opts)?;
            let lcx = classify_lcx(tree, &cands)?;
            let mut branch_labels = vec![BranchLabel::Unclassified; tree.len()];
            branch_labels[lad] = BranchLabel::Lad;
            branch_labels[lcx] = BranchLabel::Lcx;
            labels.insert("LAD".into(), Some(lad));
            labels.insert("LCx".into(), Some(lcx));
            Ok(Classification {
                side: Side::Left,
                labels,
                dominance: Dominance::Unknown,
                branch_labels,
                rca_end_mm: None,
                lmca_bifurcation_mm: Some(cands.bif_abscissa),
            })
        }
    }
}

/// Manual correction of an automatic classification.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOverride {
    #[serde(default)]
    pub labels: BTreeMap<String, Option<usize>>,
    #[serde(default)]
    pub dominance: Option<Dominance>,
    #[serde(default)]
    pub rca_end_mm: Option<f64>,
}

pub fn apply_override(
    mut c: Classification,
    ov: &ClassificationOverride,
    n_centerlines: usize,
) -> Result<Classification> {
    let mut parsed = Vec::new();
    for (name, idx) in &ov.labels {
        let label: BranchLabel = name.parse()?;
        if !BranchLabel::major().contains(&label) {
            return Err(Error::InvalidInput(format!(
                "override may only set RCA, LAD or LCx, got {name}"
            )));
        }
        if let Some(i) = idx {
            if *i >= n_centerlines {
                return Err(Error::InvalidInput(format!(
                    "override index {i} for {name} out of range"
                )));
            }
        }
        parsed.push((label, *idx));
    }
    for (label, _) in &parsed {
        if let Some(old) = c.index_of(*label) {
            c.branch_labels[old] = BranchLabel::Unclassified;
        }
    }
    for (label, idx) in parsed {
        if let Some(i) = idx {
            c.branch_labels[i] = label;
        }
        c.labels.insert(label.as_str().to_string(), idx);
    }
    if let Some(d) = ov.dominance {
        c.dominance = d;
    }
    if ov.rca_end_mm.is_some() {
        c.rca_end_mm = ov.rca_end_mm;
    }
    Ok(c)
}
