//! Writes a small phantom cohort, runs every stage and prints the run
//! report. Pass a directory to keep the files.

use coronary_pcat::pipeline::{phantom_cohort, run_pipeline, Overrides, PipelineConfig};

fn main() -> coronary_pcat::Result<()> {
    let tmp = tempfile::tempdir()?;
    let root = std::env::args().nth(1).map_or_else(|| tmp.path().to_path_buf(), Into::into);
    let cfg = PipelineConfig::default().with_seed(17);
    let cases = phantom_cohort(&root.join("cases"), 6, cfg.seed, &cfg.hash())?;
    println!("{} phantom cases under {}", cases.len(), root.join("cases").display());
    let report = run_pipeline(&root.join("cases"), &root.join("out"), &cfg, &Overrides::new())?;
    for c in &report.cases {
        println!(
            "{}: sides {:?}, {} lesions, {} ROIs, {} labelled{}",
            c.case,
            c.sides,
            c.lesions,
            c.pcat_rois,
            c.labelled_rows,
            c.error.as_ref().map_or(String::new(), |e| format!(", failed at {e}"))
        );
    }
    println!("dataset rows {}, metrics written {}", report.dataset_rows, report.metrics_written);
    Ok(())
}
