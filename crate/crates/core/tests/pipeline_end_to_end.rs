//! Phantom cases through every stage, compared with their ground truth.

use coronary_pcat::classifier::{Criterion, FeatureTable};
use coronary_pcat::geometry::Side;
use coronary_pcat::pcat::RoiKind;
use coronary_pcat::phantom::{gen_case, write_case, CaseSpec, PhantomCase, TreeTemplate};
use coronary_pcat::pipeline::stages::{read_lesions_csv, read_pcat_csv, LESIONS_CSV, PCAT_CSV};
use coronary_pcat::pipeline::{
    classify_stage, run_case, run_pipeline, Overrides, PipelineConfig, DATASET_CSV, FEATURES_CSV, METRICS_JSON,
};

fn cases() -> Vec<(String, PhantomCase)> {
    let templates = [TreeTemplate::RightDominant, TreeTemplate::LeftDominant, TreeTemplate::Codominant];
    (0..6u64)
        .map(|i| {
            let side = if i % 2 == 0 { Side::Left } else { Side::Right };
            let spec = CaseSpec::new(300 + i, side, templates[(i / 2) as usize % 3]);
            (format!("case{i:03}"), gen_case(&spec).unwrap())
        })
        .collect()
}

#[test]
fn stages_recover_planted_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let mut planted = 0;
    let mut matched = 0;
    for (name, case) in cases() {
        let dir = tmp.path().join("in").join(&name);
        let out = tmp.path().join("out").join(&name);
        write_case(&dir, &case, &cfg.hash()).unwrap();
        let report = run_case(&dir, &out, &cfg, &Overrides::new());
        assert!(report.ok(), "{name}: {:?}", report.error);

        let labels = &classify_stage(&dir, &out, &cfg, &Overrides::new()).unwrap()[0];
        assert_eq!(labels.labels, case.truth.tree.labels, "{name}");
        assert_eq!(labels.dominance, case.truth.tree.dominance, "{name}");

        let found = read_lesions_csv(&out.join(LESIONS_CSV)).unwrap();
        for t in &case.truth.lesions {
            planted += 1;
            let (a, b) = t.sd10.unwrap();
            if let Some(l) = found.iter().find(|l| l.branch == t.branch && l.start_mm <= b && l.end_mm >= a) {
                matched += 1;
                assert!((l.max_sd - t.lesion.depth).abs() < 0.08, "{name} {}: {} vs {}", t.branch, l.max_sd, t.lesion.depth);
            }
        }

        let expected = case.truth.expected_fai.unwrap();
        for row in read_pcat_csv(&out.join(PCAT_CSV)).unwrap() {
            if row.scope == RoiKind::Vessel {
                let fai = row.features.fai.unwrap();
                assert!((fai - expected).abs() < 2.0, "{name} {}: {fai} vs {expected}", row.branch);
                assert!(row.features.fat_fraction > 0.5);
            }
        }
        let table = FeatureTable::read_csv(&out.join(FEATURES_CSV)).unwrap();
        assert_eq!(table.len(), found.len());
    }
    assert!(planted >= 6);
    assert!(matched as f64 >= 0.9 * planted as f64, "{matched}/{planted} planted lesions found");
}

#[test]
fn full_run_writes_dataset_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default().with_seed(3);
    for (name, case) in cases() {
        write_case(&tmp.path().join("in").join(name), &case, &cfg.hash()).unwrap();
    }
    let out = tmp.path().join("out");
    let r = run_pipeline(&tmp.path().join("in"), &out, &cfg, &Overrides::new()).unwrap();
    assert!(r.ok);
    assert_eq!(r.cases.len(), 6);
    let table = FeatureTable::read_csv(&out.join(DATASET_CSV)).unwrap();
    assert_eq!(table.len(), r.dataset_rows);
    assert_eq!(r.cases.iter().map(|c| c.lesions).sum::<usize>(), table.len());
    let first = std::fs::read_to_string(out.join(DATASET_CSV)).unwrap();
    assert!(first.starts_with(&format!("# coronary-pcat {} config {}", env!("CARGO_PKG_VERSION"), cfg.hash())));
    if r.metrics_written {
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join(METRICS_JSON)).unwrap()).unwrap();
        assert_eq!(m["config_hash"], cfg.hash());
        assert_eq!(m["entries"].as_array().unwrap().len(), 4 * Criterion::ALL.len());
    }
}

#[test]
fn broken_case_stops_at_its_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let (_, case) = cases().remove(0);
    let dir = tmp.path().join("in").join("broken");
    write_case(&dir, &case, &cfg.hash()).unwrap();
    std::fs::remove_file(dir.join("ct.vol.raw")).unwrap();
    let report = run_case(&dir, &tmp.path().join("out"), &cfg, &Overrides::new());
    let err = report.error.unwrap();
    assert!(err.starts_with("pcat:"), "{err}");
    assert!(report.lesions > 0);
}
