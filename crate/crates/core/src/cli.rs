//! Command-line front end. Every subcommand maps to one library entry point.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::classifier::{predict_table, train_classifier, Criterion, FeatureTable, MlpModel};
use crate::error::{Error, Result};
use crate::io;
use crate::phantom::{gen_feature_dataset, DatasetSpec};
use crate::pipeline::{
    self, classify_stage, features_stage, group_stats, pcat_stage, stenosis_stage, write_stamped, Overrides,
    PipelineConfig,
};

#[derive(Debug, Parser)]
#[command(name = "coronary-pcat", version, about = "Coronary lesion and pericoronary fat analysis")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON configuration; missing fields keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for case-level parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON map of classification corrections keyed `<case>/<side>` or `<side>`.
    #[arg(long, global = true)]
    pub override_labels: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic cases with ground truth.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        cases: usize,
    },
    /// Label the major branches of a case.
    Classify(CaseArgs),
    /// Healthy-radius regression and lesion detection (needs classify).
    Stenosis(CaseArgs),
    /// Fat features per vessel and lesion, then the case feature table
    /// (needs stenosis).
    Pcat(CaseArgs),
    /// Merge case feature tables, or generate a synthetic one.
    Dataset {
        /// Run output directory whose case subdirectories hold features.csv.
        #[arg(long, required_unless_present = "synthetic")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Generate a table with a planted linear signal instead.
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 300)]
        rows: usize,
        #[arg(long, default_value_t = 12)]
        features: usize,
    },
    /// Train the lesion classifier on a feature table.
    Train {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value = "HRS")]
        criterion: Criterion,
        /// Model JSON.
        #[arg(long)]
        out: PathBuf,
        /// Training report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Severity probability for every row of a feature table.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a feature between severe and non-severe lesions.
    Stats {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        feature: String,
        #[arg(long, default_value = "HRS")]
        criterion: Criterion,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All stages on every case under the input directory.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct CaseArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn load_config(g: &GlobalArgs) -> Result<PipelineConfig> {
    let cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    Ok(match g.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn load_overrides(path: Option<&Path>) -> Result<Overrides> {
    path.map_or_else(|| Ok(Overrides::new()), io::read_json)
}

fn print_flags(flags: &[String]) {
    for f in flags {
        log::warn!("{f}");
    }
}

/// Runs the parsed command. `Ok(false)` means it finished but a stage
/// reported an error.
pub fn run(cli: Cli) -> Result<bool> {
    if let Some(j) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot start {j} workers: {e}")))?;
    }
    let cfg = load_config(&cli.global)?;
    let hash = cfg.hash();
    let overrides = load_overrides(cli.global.override_labels.as_deref())?;
    match cli.command {
        Command::Phantom { out, cases } => {
            let dirs = pipeline::phantom_cohort(&out, cases, cfg.seed, &hash)?;
            println!("wrote {} cases to {}", dirs.len(), out.display());
        }
        Command::Classify(a) => {
            for c in classify_stage(&a.case, &a.out, &cfg, &overrides)? {
                println!("{:?}: {:?}, dominance {:?}", c.side, c.labels, c.dominance);
            }
        }
        Command::Stenosis(a) => {
            let s = stenosis_stage(&a.case, &a.out, &cfg)?;
            print_flags(&s.flags);
            println!("{} lesions", s.value.len());
        }
        Command::Pcat(a) => {
            let p = pcat_stage(&a.case, &a.out, &cfg)?;
            print_flags(&p.flags);
            let f = features_stage(&a.case, &a.out, &cfg)?;
            print_flags(&f.flags);
            println!("{} ROIs, {} feature rows", p.value.len(), f.value.len());
        }
        Command::Dataset {
            input,
            out,
            synthetic,
            rows,
            features,
        } => {
            let table = if synthetic {
                let weights = vec![1.5, -1.0, 0.8];
                gen_feature_dataset(&DatasetSpec::linear(cfg.seed, rows, features, weights, 0.3))?.0
            } else {
                let root = input.expect("clap requires input without --synthetic");
                let dirs = pipeline::discover_outputs(&root)?;
                pipeline::merge_features(&dirs)?
            };
            table.write_csv(&out, &hash)?;
            println!("{} rows", table.len());
        }
        Command::Train {
            table,
            criterion,
            out,
            report,
        } => {
            let t = FeatureTable::read_csv(&table)?;
            let o = train_classifier(&t, criterion, &cfg.cutoffs, &cfg.train)?;
            print_flags(&o.report.flags);
            write_stamped(&out, &hash, &o.model)?;
            if let Some(r) = report {
                write_stamped(&r, &hash, &o.report)?;
            }
            if let Some(m) = &o.report.test {
                println!(
                    "test: accuracy {:.3}, f1 {:.3}, auc {}",
                    m.accuracy,
                    m.f1,
                    m.auc.map_or("n/a".into(), |a| format!("{a:.3}"))
                );
            }
        }
        Command::Predict { model, table, out } => {
            let m: pipeline::Stamped<MlpModel> = io::read_json(&model)?;
            let t = FeatureTable::read_csv(&table)?;
            let p = predict_table(&m.body, &t)?;
            let rows: Vec<Vec<String>> = t
                .rows
                .iter()
                .zip(&p)
                .map(|(r, p)| vec![r.patient.clone(), r.branch.clone(), r.lesion_id.to_string(), io::csv_float(*p)])
                .collect();
            io::write_csv(&out, &hash, &["patient", "branch", "lesion_id", "probability"], &rows)?;
        }
        Command::Stats {
            table,
            feature,
            criterion,
            out,
        } => {
            let t = FeatureTable::read_csv(&table)?;
            let s = group_stats(&t, &feature, criterion, &cfg)?;
            match out {
                Some(p) => write_stamped(&p, &hash, &s)?,
                None => print!("{}", io::to_canonical_json(&pipeline::Stamped::new(&hash, &s))?),
            }
        }
        Command::Run { input, out } => {
            let r = pipeline::run_pipeline(&input, &out, &cfg, &overrides)?;
            for c in &r.cases {
                if let Some(e) = &c.error {
                    eprintln!("{}: {e}", c.case);
                }
            }
            println!(
                "{} cases, {} failed, {} dataset rows, metrics {}",
                r.cases.len(),
                r.cases.iter().filter(|c| !c.ok()).count(),
                r.dataset_rows,
                if r.metrics_written { "written" } else { "not written" }
            );
            return Ok(r.ok);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_line_is_well_formed() {
        Cli::command().debug_assert();
        let cli = Cli::parse_from(["coronary-pcat", "run", "--input", "a", "--out", "b", "--seed", "3", "--jobs", "2"]);
        assert_eq!(cli.global.seed, Some(3));
        assert_eq!(cli.global.jobs, Some(2));
        let cli = Cli::parse_from(["coronary-pcat", "stats", "--table", "t.csv", "--feature", "fai", "--criterion", "wss"]);
        assert!(matches!(cli.command, Command::Stats { criterion: Criterion::Wss, .. }));
    }
}
