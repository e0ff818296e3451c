//! End-to-end orchestration over case directories.
//!
//! A case directory holds `left.json` and/or `right.json` (centerline
//! trees), the CT volume pair `ct.vol.json`/`ct.vol.raw`, the lumen mask
//! `lumen.vol.json`/`lumen.vol.raw` and optionally `functional.csv`.

pub mod config;
pub mod stages;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{write_stamped, PipelineConfig, Stamped};
pub use stages::{
    case_name, classify_stage, features_stage, pcat_stage, present_sides, stenosis_stage, Overrides, PcatRow,
    RegressionDoc, FEATURES_CSV, FEATURE_COLUMNS,
};

use crate::classifier::{label_lesions, train_classifier, Criterion, FeatureTable, TrainReport};
use crate::error::{Error, Result};
use crate::geometry::Side;
use crate::phantom::{gen_case, write_case, CaseSpec, TreeTemplate};
use crate::stats::{compare_groups, GroupComparison};

pub const CASE_REPORT: &str = "report.json";
pub const DATASET_CSV: &str = "dataset.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const RUN_REPORT: &str = "run_report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: String,
    pub sides: Vec<Side>,
    pub lesions: usize,
    pub pcat_rois: usize,
    pub labelled_rows: usize,
    pub flags: Vec<String>,
    /// `stage: message` for the stage that stopped the case.
    pub error: Option<String>,
}

impl CaseReport {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Runs classify, stenosis, pcat and feature assembly on one case. Stages
/// run in order; the first failing stage ends the case.
pub fn run_case(case_dir: &Path, out_dir: &Path, cfg: &PipelineConfig, overrides: &Overrides) -> CaseReport {
    let mut report = CaseReport {
        case: case_name(case_dir),
        sides: present_sides(case_dir),
        lesions: 0,
        pcat_rois: 0,
        labelled_rows: 0,
        flags: Vec::new(),
        error: None,
    };
    let result = (|| -> std::result::Result<(), (String, Error)> {
        let tag = |stage: &'static str| move |e: Error| (stage.to_string(), e);
        classify_stage(case_dir, out_dir, cfg, overrides).map_err(tag("classify"))?;
        let s = stenosis_stage(case_dir, out_dir, cfg).map_err(tag("stenosis"))?;
        report.lesions = s.value.len();
        report.flags.extend(s.flags);
        let p = pcat_stage(case_dir, out_dir, cfg).map_err(tag("pcat"))?;
        report.pcat_rois = p.value.len();
        report.flags.extend(p.flags);
        let f = features_stage(case_dir, out_dir, cfg).map_err(tag("features"))?;
        report.labelled_rows = f
            .value
            .rows
            .iter()
            .filter(|r| cfg.cutoffs.label(&r.functional, Criterion::Hrs).is_some())
            .count();
        report.flags.extend(f.flags);
        Ok(())
    })();
    if let Err((stage, e)) = result {
        log::error!("{}: {stage} failed: {e}", report.case);
        report.error = Some(format!("{stage}: {e}"));
    }
    let _ = std::fs::create_dir_all(out_dir);
    if let Err(e) = write_stamped(&out_dir.join(CASE_REPORT), &cfg.hash(), &report) {
        report.error.get_or_insert(format!("report: {e}"));
    }
    report
}

/// Case directories under `input`, sorted by name; `input` itself when it
/// is a case directory.
pub fn discover_cases(input: &Path) -> Result<Vec<PathBuf>> {
    if !input.is_dir() {
        return Err(Error::MissingFile(input.into()));
    }
    if !present_sides(input).is_empty() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut cases: Vec<PathBuf> = std::fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && !present_sides(p).is_empty())
        .collect();
    cases.sort();
    if cases.is_empty() {
        return Err(Error::InvalidInput(format!("no case directory under {}", input.display())));
    }
    Ok(cases)
}

/// Case output directories (those holding `features.csv`) under a run
/// output directory, sorted by name.
pub fn discover_outputs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::MissingFile(root.into()));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(FEATURES_CSV).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Concatenates per-case feature tables in case order.
pub fn merge_features(case_out_dirs: &[PathBuf]) -> Result<FeatureTable> {
    let mut merged = FeatureTable {
        feature_names: FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows: Vec::new(),
    };
    for dir in case_out_dirs {
        let t = FeatureTable::read_csv(&dir.join(FEATURES_CSV))?;
        if t.feature_names != merged.feature_names {
            return Err(Error::InvalidInput(format!(
                "{} has different feature columns",
                dir.join(FEATURES_CSV).display()
            )));
        }
        merged.rows.extend(t.rows);
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsEntry {
    pub subset: String,
    pub criterion: Criterion,
    /// Why no model was trained, for example a class absent from the subset.
    pub skipped: Option<String>,
    pub report: Option<TrainReport>,
}

pub const SUBSETS: [(&str, &[&str]); 4] = [("all", &[]), ("LAD", &["LAD"]), ("LCx", &["LCx"]), ("RCA", &["RCA"])];

/// Trains and evaluates one model per branch subset and criterion.
pub fn evaluate_dataset(table: &FeatureTable, cfg: &PipelineConfig) -> Result<Vec<MetricsEntry>> {
    let mut out = Vec::new();
    for (name, branches) in SUBSETS {
        let branches: Vec<String> = branches.iter().map(|s| s.to_string()).collect();
        let sub = table.subset(&branches);
        for criterion in Criterion::ALL {
            let entry = match train_classifier(&sub, criterion, &cfg.cutoffs, &cfg.train) {
                Ok(o) => MetricsEntry {
                    subset: name.into(),
                    criterion,
                    skipped: None,
                    report: Some(o.report),
                },
                Err(e @ Error::ClassAbsent { .. }) => {
                    log::warn!("{name}/{criterion}: {e}");
                    MetricsEntry {
                        subset: name.into(),
                        criterion,
                        skipped: Some(e.to_string()),
                        report: None,
                    }
                }
                Err(e) => return Err(e),
            };
            out.push(entry);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub entries: Vec<MetricsEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub cases: Vec<CaseReport>,
    pub dataset_rows: usize,
    pub metrics_written: bool,
    pub error: Option<String>,
    pub ok: bool,
}

/// Runs every case (in parallel), merges features into `dataset.csv`, and
/// writes `metrics.json` when the dataset holds labelled rows.
pub fn run_pipeline(input: &Path, out: &Path, cfg: &PipelineConfig, overrides: &Overrides) -> Result<RunReport> {
    let cases = discover_cases(input)?;
    std::fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let reports: Vec<CaseReport> = cases
        .par_iter()
        .map(|c| run_case(c, &out.join(case_name(c)), cfg, overrides))
        .collect();
    let done: Vec<PathBuf> = reports
        .iter()
        .filter(|r| r.ok())
        .map(|r| out.join(&r.case))
        .collect();
    let mut report = RunReport {
        dataset_rows: 0,
        metrics_written: false,
        error: None,
        ok: false,
        cases: reports,
    };
    let tail = (|| -> Result<()> {
        let table = merge_features(&done)?;
        table.write_csv(&out.join(DATASET_CSV), &hash)?;
        report.dataset_rows = table.len();
        if Criterion::ALL
            .iter()
            .any(|&c| !label_lesions(&table, c, &cfg.cutoffs).rows.is_empty())
        {
            let metrics = MetricsReport {
                entries: evaluate_dataset(&table, cfg)?,
            };
            write_stamped(&out.join(METRICS_JSON), &hash, &metrics)?;
            report.metrics_written = true;
        }
        Ok(())
    })();
    if let Err(e) = tail {
        log::error!("dataset stage failed: {e}");
        report.error = Some(e.to_string());
    }
    report.ok = report.error.is_none() && report.cases.iter().all(CaseReport::ok);
    write_stamped(&out.join(RUN_REPORT), &hash, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub feature: String,
    pub criterion: Criterion,
    /// Sizes of the severe and non-severe groups.
    pub groups: [usize; 2],
    pub comparison: GroupComparison,
}

/// Compares a feature between severe and non-severe lesions.
pub fn group_stats(table: &FeatureTable, feature: &str, criterion: Criterion, cfg: &PipelineConfig) -> Result<StatsReport> {
    let col = table.column(feature)?;
    let labels = label_lesions(table, criterion, &cfg.cutoffs);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (&r, &y) in labels.rows.iter().zip(&labels.y) {
        let v = table.rows[r].features[col];
        if v.is_finite() {
            if y == 1 { pos.push(v) } else { neg.push(v) }
        }
    }
    Ok(StatsReport {
        feature: feature.into(),
        criterion,
        groups: [pos.len(), neg.len()],
        comparison: compare_groups(&pos, &neg, cfg.alpha)?,
    })
}

/// Writes `n` synthetic cases `case000`, `case001`, ... under `out`.
/// Sides alternate left/right; templates cycle through right dominant,
/// left dominant and codominant.
pub fn phantom_cohort(out: &Path, n: usize, seed: u64, config_hash: &str) -> Result<Vec<PathBuf>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<(PathBuf, CaseSpec)> = (0..n)
        .map(|i| {
            let side = if i % 2 == 0 { Side::Left } else { Side::Right };
            let template = [TreeTemplate::RightDominant, TreeTemplate::LeftDominant, TreeTemplate::Codominant][(i / 2) % 3];
            (out.join(format!("case{i:03}")), CaseSpec::new(rng.random(), side, template))
        })
        .collect();
    specs
        .par_iter()
        .map(|(dir, spec)| {
            write_case(dir, &gen_case(spec)?, config_hash)?;
            Ok(dir.clone())
        })
        .collect()
}
