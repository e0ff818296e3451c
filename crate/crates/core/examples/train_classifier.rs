//! Trains the lesion classifier on a synthetic table with a planted linear
//! rule and prints the selected features and test metrics.

use coronary_pcat::classifier::{train_classifier, Criterion, Cutoffs, TrainConfig};
use coronary_pcat::phantom::{gen_feature_dataset, DatasetSpec};

fn main() -> coronary_pcat::Result<()> {
    let (table, truth) = gen_feature_dataset(&DatasetSpec::linear(1, 600, 10, vec![1.5, -1.0, 0.8], 0.3))?;
    let cfg = TrainConfig {
        epochs: 150,
        ..TrainConfig::default()
    };
    let out = train_classifier(&table, Criterion::Hrs, &Cutoffs::default(), &cfg)?;
    println!("signal features {:?}", truth.signal_features);
    println!("selected        {:?}", out.report.rfe.selected);
    println!("split {:?}, best epoch {}", out.report.split, out.report.best_epoch);
    if let Some(m) = &out.report.test {
        println!("test accuracy {:.3}, F1 {:.3}, AUC {:?}", m.accuracy, m.f1, m.auc);
    }
    Ok(())
}
