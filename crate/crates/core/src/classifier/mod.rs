//! Lesion severity labelling and the feature-selection plus MLP classifier.

pub mod labels;
pub mod metrics;
pub mod mlp;
pub mod rfe;
pub mod split;
pub mod table;

use serde::{Deserialize, Serialize};

pub use labels::{label_lesions, Criterion, Cutoffs, Labels};
pub use metrics::{auc, evaluate, f1_score, Metrics};
pub use mlp::{train_mlp, Mlp, MlpModel, Normalization, TrainConfig, TrainHistory};
pub use rfe::{fit_logistic, rfe_select, LogisticFit, LogisticOptions, RfeResult};
pub use split::{stratified_split, Split};
pub use table::{FeatureRow, FeatureTable, Functional};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub criterion: Criterion,
    pub labelled: usize,
    pub positives: usize,
    /// Rows dropped for missing functional values.
    pub excluded_unlabelled: usize,
    /// Rows dropped for a missing feature value.
    pub excluded_missing_features: usize,
    pub split: PartSizes,
    pub rfe: RfeResult,
    pub best_epoch: usize,
    pub final_train_loss: f64,
    pub val: Option<Metrics>,
    pub test: Option<Metrics>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub report: TrainReport,
    pub history: TrainHistory,
    pub split: Split,
}

/// Labels rows, splits by patient, selects features on the training part
/// and trains the network. Normalisation statistics come from the
/// training part only.
pub fn train_classifier(
    table: &FeatureTable,
    criterion: Criterion,
    cutoffs: &Cutoffs,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if table.feature_names.is_empty() {
        return Err(Error::InvalidInput("feature table has no feature columns".into()));
    }
    let labels = label_lesions(table, criterion, cutoffs);
    let mut rows = Vec::with_capacity(labels.rows.len());
    let mut y = Vec::with_capacity(labels.rows.len());
    let mut missing = 0;
    for (&r, &l) in labels.rows.iter().zip(&labels.y) {
        if table.rows[r].features.iter().all(|v| v.is_finite()) {
            rows.push(r);
            y.push(l);
        } else {
            missing += 1;
        }
    }
    if missing > 0 {
        log::warn!("{criterion}: {missing} rows with missing feature values were excluded");
    }
    let patients: Vec<&str> = rows.iter().map(|&r| table.rows[r].patient.as_str()).collect();
    let split = stratified_split(&rows, &y, &patients, cfg.split, cfg.seed, criterion.as_str())?;
    let label_of = |r: usize| labels.y[labels.rows.binary_search(&r).expect("labelled row")];
    let y_of = |part: &[usize]| part.iter().map(|&r| label_of(r)).collect::<Vec<u8>>();
    let (y_train, y_val, y_test) = (y_of(&split.train), y_of(&split.val), y_of(&split.test));
    if y_train.iter().all(|&v| v == y_train[0]) {
        return Err(Error::ClassAbsent {
            criterion: criterion.as_str().into(),
            detail: "training part holds a single class".into(),
        });
    }

    let all = &table.feature_names;
    let x_train_all = table.matrix(&split.train, all)?;
    let norm_all = Normalization::fit(&x_train_all);
    let k = cfg.k_features.min(all.len());
    let rfe = rfe_select(&norm_all.apply(&x_train_all), &y_train, all, k, &cfg.logistic)?;

    let x_train = table.matrix(&split.train, &rfe.selected)?;
    let x_val = table.matrix(&split.val, &rfe.selected)?;
    let x_test = table.matrix(&split.test, &rfe.selected)?;
    let norm = Normalization::fit(&x_train);
    let (net, history) = train_mlp(&norm.apply(&x_train), &y_train, &norm.apply(&x_val), &y_val, cfg)?;
    let model = MlpModel::new(*cfg, rfe.selected.clone(), norm, &net);

    let score = |x: &ndarray::Array2<f64>, y: &[u8]| -> Result<Option<Metrics>> {
        if y.is_empty() {
            return Ok(None);
        }
        Ok(Some(evaluate(y, model.predict_matrix(x)?.as_slice().expect("contiguous"))))
    };
    let val = score(&x_val, &y_val)?;
    let test = score(&x_test, &y_test)?;
    let mut flags = Vec::new();
    if rfe.flagged {
        flags.push("logistic regression hit the iteration cap during feature elimination".into());
    }
    if y_val.is_empty() {
        flags.push("empty validation part; best weights chosen by training loss".into());
    }
    if let Some(m) = &test {
        flags.extend(m.flags.iter().map(|f| format!("test: {f}")));
    } else {
        flags.push("empty test part".into());
    }
    let report = TrainReport {
        criterion,
        labelled: labels.rows.len(),
        positives: labels.positives(),
        excluded_unlabelled: labels.excluded.len(),
        excluded_missing_features: missing,
        split: PartSizes {
            train: split.train.len(),
            val: split.val.len(),
            test: split.test.len(),
        },
        rfe,
        best_epoch: history.best_epoch,
        final_train_loss: *history.train_loss.last().expect("at least one epoch"),
        val,
        test,
        flags,
    };
    Ok(TrainOutcome {
        model,
        report,
        history,
        split,
    })
}

/// Probability per table row; rows missing a selected feature are `None`.
pub fn predict_table(model: &MlpModel, table: &FeatureTable) -> Result<Vec<Option<f64>>> {
    let cols = model
        .selected_features
        .iter()
        .map(|n| table.column(n))
        .collect::<Result<Vec<_>>>()?;
    table
        .rows
        .iter()
        .map(|row| {
            let pairs: Vec<(String, f64)> = model
                .selected_features
                .iter()
                .zip(&cols)
                .map(|(n, &c)| (n.clone(), row.features[c]))
                .collect();
            match model.predict(&pairs) {
                Ok(p) => Ok(Some(p)),
                Err(Error::MissingFeature(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}
