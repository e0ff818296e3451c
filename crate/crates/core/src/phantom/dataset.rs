use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::{FeatureRow, FeatureTable, Functional};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Rule {
    /// Positive when `sum_j w_j x_{s_j} + noise > 0`.
    Linear { weights: Vec<f64> },
    /// Positive when exactly one of the first two signal features is positive.
    Xor,
    /// Labels independent of the features.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub seed: u64,
    pub rows: usize,
    /// Rows are spread over this many patients.
    pub patients: usize,
    pub features: usize,
    /// Column indices the rule reads.
    pub signal: Vec<usize>,
    pub rule: Rule,
    /// Standard deviation of the gaussian noise added to the rule score.
    pub noise: f64,
}

impl DatasetSpec {
    pub fn linear(seed: u64, rows: usize, features: usize, weights: Vec<f64>, noise: f64) -> Self {
        Self {
            seed,
            rows,
            patients: rows / 2,
            features,
            signal: (0..weights.len()).collect(),
            rule: Rule::Linear { weights },
            noise,
        }
    }

    pub fn noise_only(seed: u64, rows: usize, features: usize) -> Self {
        Self {
            seed,
            rows,
            patients: rows / 2,
            features,
            signal: Vec::new(),
            rule: Rule::None,
            noise: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.patients == 0 || self.features == 0 {
            return Err(Error::PhantomSpec("dataset needs rows, patients and features".into()));
        }
        if self.signal.len() > self.features || self.signal.iter().any(|&s| s >= self.features) {
            return Err(Error::PhantomSpec("signal features must be existing columns".into()));
        }
        match &self.rule {
            Rule::Linear { weights } if weights.len() != self.signal.len() => {
                Err(Error::PhantomSpec("one weight per signal feature".into()))
            }
            Rule::Xor if self.signal.len() < 2 => Err(Error::PhantomSpec("xor needs two signal features".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTruth {
    pub rule: Rule,
    pub signal_features: Vec<String>,
    pub labels: Vec<u8>,
}

const BRANCHES: [&str; 3] = ["LAD", "LCx", "RCA"];

/// Functional values on the severe or the non-severe side of every cutoff,
/// so each criterion reproduces the planted label.
fn functional_for(label: bool, rng: &mut ChaCha8Rng) -> Functional {
    if label {
        Functional {
            vffr: Some(rng.random_range(0.55..0.79)),
            wss: Some(rng.random_range(16.0..40.0)),
            dffr: Some(rng.random_range(0.07..0.25)),
        }
    } else {
        Functional {
            vffr: Some(rng.random_range(0.82..0.99)),
            wss: Some(rng.random_range(2.0..15.0)),
            dffr: Some(rng.random_range(0.0..0.05)),
        }
    }
}

/// Feature table whose labels follow a known rule on designated columns.
pub fn gen_feature_dataset(spec: &DatasetSpec) -> Result<(FeatureTable, DatasetTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let feature_names: Vec<String> = (0..spec.features).map(|j| format!("f{j}")).collect();
    let mut rows = Vec::with_capacity(spec.rows);
    let mut labels = Vec::with_capacity(spec.rows);
    let mut per_patient = vec![0usize; spec.patients];
    for i in 0..spec.rows {
        let x: Vec<f64> = (0..spec.features).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e: f64 = StandardNormal.sample(&mut rng);
        let label = match &spec.rule {
            Rule::Linear { weights } => {
                weights.iter().zip(&spec.signal).map(|(w, &j)| w * x[j]).sum::<f64>() + spec.noise * e > 0.0
            }
            Rule::Xor => (x[spec.signal[0]] + spec.noise * e > 0.0) != (x[spec.signal[1]] > 0.0),
            Rule::None => rng.random::<bool>(),
        };
        let patient = i % spec.patients;
        let lesion_id = per_patient[patient];
        per_patient[patient] += 1;
        rows.push(FeatureRow {
            patient: format!("p{patient:04}"),
            branch: BRANCHES[i % BRANCHES.len()].to_string(),
            lesion_id,
            features: x,
            functional: functional_for(label, &mut rng),
        });
        labels.push(u8::from(label));
    }
    let truth = DatasetTruth {
        rule: spec.rule.clone(),
        signal_features: spec.signal.iter().map(|&j| feature_names[j].clone()).collect(),
        labels,
    };
    Ok((FeatureTable { feature_names, rows }, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{fit_logistic, label_lesions, Criterion, Cutoffs, LogisticOptions};

    #[test]
    fn every_criterion_reproduces_the_planted_label() {
        let (table, truth) = gen_feature_dataset(&DatasetSpec::linear(4, 120, 5, vec![1.0, -1.0], 0.0)).unwrap();
        for c in Criterion::ALL {
            let l = label_lesions(&table, c, &Cutoffs::default());
            assert_eq!(l.y, truth.labels, "{c}");
        }
    }

    #[test]
    fn logistic_recovers_planted_signs() {
        let weights = vec![2.0, -1.5, 0.8];
        let (table, truth) = gen_feature_dataset(&DatasetSpec::linear(11, 400, 6, weights.clone(), 0.0)).unwrap();
        let rows: Vec<usize> = (0..table.len()).collect();
        let x = table.matrix(&rows, &table.feature_names).unwrap();
        let fit = fit_logistic(x.view(), &truth.labels, &LogisticOptions::default());
        for (j, w) in weights.iter().enumerate() {
            assert_eq!(fit.coef[j].signum(), w.signum());
        }
    }

    #[test]
    fn seeded_tables_repeat_bit_for_bit() {
        let spec = DatasetSpec::noise_only(8, 50, 4);
        let (a, _) = gen_feature_dataset(&spec).unwrap();
        let (b, _) = gen_feature_dataset(&spec).unwrap();
        assert_eq!(a, b);
        let mut xor = DatasetSpec::noise_only(8, 50, 4);
        xor.rule = Rule::Xor;
        assert!(gen_feature_dataset(&xor).is_err());
        xor.signal = vec![0, 1];
        assert!(gen_feature_dataset(&xor).is_ok());
    }
}
