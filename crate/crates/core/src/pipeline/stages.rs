//! File-based pipeline stages. Each stage reads its inputs from the case
//! directory or from earlier outputs, and writes its own outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{write_stamped, PipelineConfig, Stamped};
use crate::classifier::table::{read_functional_csv, FunctionalRecord};
use crate::classifier::{FeatureRow, FeatureTable, Functional};
use crate::error::{Error, Result};
use crate::geometry::{
    apply_override, classify_tree, BranchLabel, Classification, ClassificationOverride, CoronaryTree, Side,
};
use crate::io::{self, format_f64};
use crate::pcat::{
    lesion_roi, load_mask, load_volume, pcat_features, rasterize_tube, vessel_roi, BinaryMask, PcatFeatures,
    RoiKind, TubeRoi, VoxelVolume, PERCENTILES,
};
use crate::phantom::case::files;
use crate::stenosis::{analyze_vessel, Lesion, RegressionParams};

/// Manual classification corrections keyed `<case>/<side>` or `<side>`.
pub type Overrides = BTreeMap<String, ClassificationOverride>;

pub const LESIONS_CSV: &str = "lesions.csv";
pub const PCAT_CSV: &str = "pcat.csv";
pub const FEATURES_CSV: &str = "features.csv";

pub const FEATURE_COLUMNS: [&str; 19] = [
    "max_sd",
    "length_mm",
    "mla_mm2",
    "dist_ostium_mm",
    "tortuosity",
    "fai",
    "p10",
    "p25",
    "p50",
    "p75",
    "p90",
    "p95",
    "fat_fraction",
    "fat_volume_mm3",
    "vessel_fai",
    "vessel_fat_volume_mm3",
    "branch_lad",
    "branch_lcx",
    "branch_rca",
];

const LESION_HEADER: [&str; 9] = [
    "branch",
    "lesion_id",
    "start_mm",
    "end_mm",
    "max_sd",
    "length_mm",
    "mla_mm2",
    "dist_ostium_mm",
    "tortuosity",
];

const PCAT_HEADER: [&str; 14] = [
    "scope",
    "branch",
    "lesion_id",
    "fai",
    "p10",
    "p25",
    "p50",
    "p75",
    "p90",
    "p95",
    "fat_fraction",
    "fat_volume_mm3",
    "roi_voxels",
    "fat_voxels",
];

pub fn side_name(side: Side) -> &'static str {
    match side {
        Side::Left => "left",
        Side::Right => "right",
    }
}

fn tree_path(case_dir: &Path, side: Side) -> PathBuf {
    case_dir.join(match side {
        Side::Left => files::LEFT_TREE,
        Side::Right => files::RIGHT_TREE,
    })
}

pub fn classification_path(out_dir: &Path, side: Side) -> PathBuf {
    out_dir.join(format!("classification_{}.json", side_name(side)))
}

pub fn regression_path(out_dir: &Path, branch: BranchLabel) -> PathBuf {
    out_dir.join(format!("regression_{branch}.json"))
}

/// Sides with a centerline file in the case directory.
pub fn present_sides(case_dir: &Path) -> Vec<Side> {
    [Side::Left, Side::Right]
        .into_iter()
        .filter(|&s| tree_path(case_dir, s).is_file())
        .collect()
}

pub fn case_name(case_dir: &Path) -> String {
    case_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".into())
}

fn read_stamped<T: serde::de::DeserializeOwned>(path: &Path, config_hash: &str) -> Result<T> {
    let doc: Stamped<T> = io::read_json(path)?;
    if doc.config_hash != config_hash {
        log::warn!("{} was written under config {}", path.display(), doc.config_hash);
    }
    Ok(doc.body)
}

fn read_tree(case_dir: &Path, side: Side, cfg: &PipelineConfig) -> Result<CoronaryTree> {
    io::read_tree(&tree_path(case_dir, side), cfg.bifurcation_tol)
}

/// Labels the major branches of every tree in the case and writes one
/// classification file per side.
pub fn classify_stage(
    case_dir: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
    overrides: &Overrides,
) -> Result<Vec<Classification>> {
    let sides = present_sides(case_dir);
    if sides.is_empty() {
        return Err(Error::MissingFile(tree_path(case_dir, Side::Left)));
    }
    std::fs::create_dir_all(out_dir)?;
    let case = case_name(case_dir);
    let hash = cfg.hash();
    let mut out = Vec::new();
    for side in sides {
        let tree = read_tree(case_dir, side, cfg)?;
        let mut cls = classify_tree(&tree, &cfg.classify)?;
        let key = side_name(side);
        if let Some(ov) = overrides.get(&format!("{case}/{key}")).or_else(|| overrides.get(key)) {
            log::info!("{case}: manual override applied to the {key} tree");
            cls = apply_override(cls, ov, tree.len())?;
        }
        write_stamped(&classification_path(out_dir, side), &hash, &cls)?;
        out.push(cls);
    }
    Ok(out)
}

/// Regression intermediates of one vessel, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionDoc {
    pub branch: BranchLabel,
    pub centerline: usize,
    pub abscissa: Vec<f64>,
    pub r: Vec<f64>,
    pub r_max: Vec<f64>,
    pub w: Vec<f64>,
    pub r_h: Vec<f64>,
    pub sd: Vec<f64>,
    pub params: RegressionParams,
    pub loss: f64,
    pub peaks: Vec<usize>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct StageOutput<T> {
    pub value: T,
    pub flags: Vec<String>,
}

/// Stenosis analysis of every classified major branch: one regression file
/// per branch and the lesion table of the case.
pub fn stenosis_stage(case_dir: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<StageOutput<Vec<Lesion>>> {
    let hash = cfg.hash();
    let mut lesions = Vec::new();
    let mut flags = Vec::new();
    for side in present_sides(case_dir) {
        let cls: Classification = read_stamped(&classification_path(out_dir, side), &hash)?;
        let tree = read_tree(case_dir, side, cfg)?;
        for (label, idx) in cls.major_branches() {
            let c = tree
                .centerlines
                .get(idx)
                .ok_or_else(|| Error::InvalidInput(format!("{label} points at missing centerline {idx}")))?;
            let a = analyze_vessel(c, label, &cfg.stenosis)?;
            let doc = RegressionDoc {
                branch: label,
                centerline: idx,
                abscissa: a.profile.abscissa().to_vec(),
                r: a.profile.radius().to_vec(),
                r_max: a.regression.r_max.clone(),
                w: a.regression.w.clone(),
                r_h: a.regression.r_h.clone(),
                sd: a.sd.sd.clone(),
                params: a.fit.params,
                loss: a.fit.loss,
                peaks: a.fit.peaks.indices.clone(),
                flags: a.flags.clone(),
            };
            write_stamped(&regression_path(out_dir, label), &hash, &doc)?;
            flags.extend(a.flags);
            lesions.extend(a.lesions);
        }
    }
    write_lesions_csv(&out_dir.join(LESIONS_CSV), &hash, &lesions)?;
    Ok(StageOutput { value: lesions, flags })
}

pub fn write_lesions_csv(path: &Path, config_hash: &str, lesions: &[Lesion]) -> Result<()> {
    let rows: Vec<Vec<String>> = lesions
        .iter()
        .map(|l| {
            vec![
                l.branch.to_string(),
                l.lesion_id.to_string(),
                format_f64(l.start_mm),
                format_f64(l.end_mm),
                format_f64(l.max_sd),
                format_f64(l.length_mm),
                format_f64(l.mla_mm2),
                format_f64(l.dist_ostium_mm),
                format_f64(l.tortuosity),
            ]
        })
        .collect();
    io::write_csv(path, config_hash, &LESION_HEADER, &rows)
}

fn parse_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.into(),
        offset: e.position().map(|p| p.byte()).unwrap_or(0),
        message: e.to_string(),
    }
}

pub fn read_lesions_csv(path: &Path) -> Result<Vec<Lesion>> {
    let mut rdr = io::csv_reader(path)?;
    rdr.deserialize().map(|r| r.map_err(|e| parse_error(path, e))).collect()
}

/// One line of the PCAT table.
#[derive(Debug, Clone, PartialEq)]
pub struct PcatRow {
    pub scope: RoiKind,
    pub branch: BranchLabel,
    pub lesion_id: Option<usize>,
    pub features: PcatFeatures,
}

fn measure(roi: &TubeRoi, vol: &VoxelVolume, lumen: &BinaryMask, cfg: &PipelineConfig) -> Result<(PcatRow, Vec<String>)> {
    let mask = rasterize_tube(roi, &vol.grid, lumen)?;
    let mut flags = Vec::new();
    let what = match roi.lesion_id {
        Some(id) => format!("{} lesion {id}", roi.branch),
        None => format!("{} vessel", roi.branch),
    };
    if roi.truncated {
        flags.push(format!("{what}: ROI truncated at the end of the centerline"));
    }
    if mask.count() == 0 {
        flags.push(format!("{what}: ROI lies outside the volume"));
    }
    let features = pcat_features(&mask, vol, &cfg.window)?;
    if features.fai.is_none() {
        flags.push(format!("{what}: no voxel inside the fat window"));
    }
    Ok((
        PcatRow {
            scope: roi.kind,
            branch: roi.branch,
            lesion_id: roi.lesion_id,
            features,
        },
        flags,
    ))
}

/// Per-vessel and per-lesion fat features of the case.
pub fn pcat_stage(case_dir: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<StageOutput<Vec<PcatRow>>> {
    let hash = cfg.hash();
    let vol = load_volume(&case_dir.join(files::VOLUME))?;
    let lumen = load_mask(&case_dir.join(files::LUMEN))?;
    let lesions = read_lesions_csv(&out_dir.join(LESIONS_CSV))?;
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for side in present_sides(case_dir) {
        let cls: Classification = read_stamped(&classification_path(out_dir, side), &hash)?;
        let tree = read_tree(case_dir, side, cfg)?;
        for (label, idx) in cls.major_branches() {
            let c = &tree.centerlines[idx];
            match vessel_roi(label, c, cls.lmca_bifurcation_mm, &cfg.roi) {
                Ok(roi) => {
                    let (row, f) = measure(&roi, &vol, &lumen, cfg)?;
                    rows.push(row);
                    flags.extend(f);
                }
                Err(Error::EmptyRoi(msg)) => flags.push(format!("{label} vessel: {msg}")),
                Err(e) => return Err(e),
            }
            let own: Vec<&Lesion> = lesions.iter().filter(|l| l.branch == label).collect();
            if own.is_empty() {
                continue;
            }
            let reg: RegressionDoc = read_stamped(&regression_path(out_dir, label), &hash)?;
            for l in own {
                let roi = lesion_roi(l, c, &reg.abscissa, &reg.r_h, cfg.roi.radius_factor)?;
                let (row, f) = measure(&roi, &vol, &lumen, cfg)?;
                rows.push(row);
                flags.extend(f);
            }
        }
    }
    write_pcat_csv(&out_dir.join(PCAT_CSV), &hash, &rows)?;
    Ok(StageOutput { value: rows, flags })
}

pub fn write_pcat_csv(path: &Path, config_hash: &str, rows: &[PcatRow]) -> Result<()> {
    let recs: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let f = &r.features;
            let mut rec = vec![
                r.scope.as_str().to_string(),
                r.branch.to_string(),
                r.lesion_id.map(|i| i.to_string()).unwrap_or_default(),
                io::csv_float(f.fai),
            ];
            for q in 0..PERCENTILES.len() {
                rec.push(io::csv_float(f.percentiles.map(|p| p[q])));
            }
            rec.extend([
                format_f64(f.fat_fraction),
                format_f64(f.fat_volume_mm3),
                f.roi_voxels.to_string(),
                f.fat_voxels.to_string(),
            ]);
            rec
        })
        .collect();
    io::write_csv(path, config_hash, &PCAT_HEADER, &recs)
}

pub fn read_pcat_csv(path: &Path) -> Result<Vec<PcatRow>> {
    let mut rdr = io::csv_reader(path)?;
    let bad = |offset: u64, message: String| Error::Parse {
        path: path.into(),
        offset,
        message,
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_error(path, e))?;
        let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
        if rec.len() != PCAT_HEADER.len() {
            return Err(bad(offset, format!("expected {} fields, got {}", PCAT_HEADER.len(), rec.len())));
        }
        let opt = |i: usize| -> Result<Option<f64>> {
            match &rec[i] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(offset, format!("bad number `{s}`"))),
            }
        };
        let num = |i: usize| opt(i)?.ok_or_else(|| bad(offset, format!("empty {}", PCAT_HEADER[i])));
        let count = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(offset, format!("bad count `{}`", &rec[i])));
        let scope = match &rec[0] {
            "vessel" => RoiKind::Vessel,
            "lesion" => RoiKind::Lesion,
            s => return Err(bad(offset, format!("unknown scope `{s}`"))),
        };
        let branch: BranchLabel = rec[1].parse().map_err(|_| bad(offset, format!("unknown branch `{}`", &rec[1])))?;
        let lesion_id = if rec[2].is_empty() { None } else { Some(count(2)?) };
        let pct: Vec<Option<f64>> = (4..10).map(opt).collect::<Result<_>>()?;
        let percentiles = pct
            .iter()
            .all(Option::is_some)
            .then(|| std::array::from_fn(|q| pct[q].expect("checked")));
        out.push(PcatRow {
            scope,
            branch,
            lesion_id,
            features: PcatFeatures {
                fai: opt(3)?,
                percentiles,
                fat_fraction: num(10)?,
                fat_volume_mm3: num(11)?,
                roi_voxels: count(12)?,
                fat_voxels: count(13)?,
            },
        });
    }
    Ok(out)
}

/// Functional record whose position falls inside the lesion, if any.
fn functional_for(lesion: &Lesion, records: &[FunctionalRecord]) -> Functional {
    records
        .iter()
        .find(|r| r.branch == lesion.branch.as_str() && r.position_mm >= lesion.start_mm && r.position_mm <= lesion.end_mm)
        .map(|r| r.functional)
        .unwrap_or_default()
}

/// One feature row per lesion: morphometrics, lesion and vessel fat
/// features, branch indicator and the matched functional values.
pub fn features_stage(case_dir: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<StageOutput<FeatureTable>> {
    let lesions = read_lesions_csv(&out_dir.join(LESIONS_CSV))?;
    let pcat = read_pcat_csv(&out_dir.join(PCAT_CSV))?;
    let functional_path = case_dir.join(files::FUNCTIONAL);
    let records = if functional_path.is_file() {
        read_functional_csv(&functional_path)?
    } else {
        Vec::new()
    };
    let patient = case_name(case_dir);
    let mut flags = Vec::new();
    let rows = lesions
        .iter()
        .map(|l| {
            let lf = pcat
                .iter()
                .find(|p| p.scope == RoiKind::Lesion && p.branch == l.branch && p.lesion_id == Some(l.lesion_id))
                .map(|p| &p.features);
            let vf = pcat
                .iter()
                .find(|p| p.scope == RoiKind::Vessel && p.branch == l.branch)
                .map(|p| &p.features);
            let nan = f64::NAN;
            let mut x = vec![l.max_sd, l.length_mm, l.mla_mm2, l.dist_ostium_mm, l.tortuosity];
            x.push(lf.and_then(|f| f.fai).unwrap_or(nan));
            match lf.and_then(|f| f.percentiles) {
                Some(p) => x.extend(p),
                None => x.extend([nan; 6]),
            }
            x.push(lf.map_or(nan, |f| f.fat_fraction));
            x.push(lf.map_or(nan, |f| f.fat_volume_mm3));
            x.push(vf.and_then(|f| f.fai).unwrap_or(nan));
            x.push(vf.map_or(nan, |f| f.fat_volume_mm3));
            for b in [BranchLabel::Lad, BranchLabel::Lcx, BranchLabel::Rca] {
                x.push(if l.branch == b { 1.0 } else { 0.0 });
            }
            let functional = functional_for(l, &records);
            if !records.is_empty() && functional == Functional::default() {
                flags.push(format!("{} lesion {}: no functional record inside the lesion", l.branch, l.lesion_id));
            }
            FeatureRow {
                patient: patient.clone(),
                branch: l.branch.to_string(),
                lesion_id: l.lesion_id,
                features: x,
                functional,
            }
        })
        .collect();
    let table = FeatureTable {
        feature_names: FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
    };
    table.write_csv(&out_dir.join(FEATURES_CSV), &cfg.hash())?;
    Ok(StageOutput { value: table, flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lesion(branch: BranchLabel, id: usize) -> Lesion {
        Lesion {
            branch,
            lesion_id: id,
            start_mm: 20.0,
            end_mm: 26.5,
            max_sd: 0.4,
            length_mm: 6.5,
            mla_mm2: 2.0,
            dist_ostium_mm: 23.0,
            tortuosity: 0.98,
        }
    }

    #[test]
    fn lesion_and_pcat_tables_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lesions = vec![lesion(BranchLabel::Lad, 0), lesion(BranchLabel::Rca, 1)];
        let p = dir.path().join(LESIONS_CSV);
        write_lesions_csv(&p, "h", &lesions).unwrap();
        assert_eq!(read_lesions_csv(&p).unwrap(), lesions);

        let rows = vec![
            PcatRow {
                scope: RoiKind::Vessel,
                branch: BranchLabel::Lcx,
                lesion_id: None,
                features: PcatFeatures {
                    fai: Some(-87.25),
                    percentiles: Some([-150.0, -120.0, -90.0, -60.0, -45.0, -40.0]),
                    fat_fraction: 0.7,
                    fat_volume_mm3: 12.8,
                    roi_voxels: 300,
                    fat_voxels: 210,
                },
            },
            PcatRow {
                scope: RoiKind::Lesion,
                branch: BranchLabel::Lad,
                lesion_id: Some(0),
                features: PcatFeatures {
                    fai: None,
                    percentiles: None,
                    fat_fraction: 0.0,
                    fat_volume_mm3: 0.0,
                    roi_voxels: 12,
                    fat_voxels: 0,
                },
            },
        ];
        let p = dir.path().join(PCAT_CSV);
        write_pcat_csv(&p, "h", &rows).unwrap();
        assert_eq!(read_pcat_csv(&p).unwrap(), rows);
    }

    #[test]
    fn functional_join_needs_position_inside_the_lesion() {
        let l = lesion(BranchLabel::Lad, 0);
        let rec = |branch: &str, pos: f64| FunctionalRecord {
            branch: branch.into(),
            position_mm: pos,
            functional: Functional {
                vffr: Some(0.7),
                wss: None,
                dffr: None,
            },
        };
        assert_eq!(functional_for(&l, &[rec("LAD", 23.0)]).vffr, Some(0.7));
        assert_eq!(functional_for(&l, &[rec("LAD", 30.0)]), Functional::default());
        assert_eq!(functional_for(&l, &[rec("LCx", 23.0)]), Functional::default());
    }

    #[test]
    fn missing_tree_is_a_named_file_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = classify_stage(dir.path(), dir.path(), &PipelineConfig::default(), &Overrides::new()).unwrap_err();
        assert!(matches!(err, Error::MissingFile(p) if p.ends_with("left.json")));
    }
}
