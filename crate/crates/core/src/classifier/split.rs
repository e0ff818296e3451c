use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Row indices of each part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn parts(&self) -> [&Vec<usize>; 3] {
        [&self.train, &self.val, &self.test]
    }
}

/// Smallest per-class count below which a warning is logged.
pub const MIN_ROWS_PER_CLASS: usize = 10;

/// Patient-grouped stratified split.
///
/// `rows[k]` is a table row with label `y[k]` and patient `patients[k]`.
/// Patients are shuffled with `seed`, then each patient's rows go to the
/// part whose per-class quota is most unfilled, weighted by the patient's
/// class mix. Ties go to the earlier part.
pub fn stratified_split(
    rows: &[usize],
    y: &[u8],
    patients: &[&str],
    ratios: [f64; 3],
    seed: u64,
    criterion: &str,
) -> Result<Split> {
    if rows.len() != y.len() || rows.len() != patients.len() {
        return Err(Error::InvalidInput("rows, labels and patients differ in length".into()));
    }
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!("split ratios must be non-negative and sum to 1: {ratios:?}")));
    }
    let total = [
        y.iter().filter(|&&v| v == 0).count(),
        y.iter().filter(|&&v| v == 1).count(),
    ];
    for (class, &n) in total.iter().enumerate() {
        if n == 0 {
            return Err(Error::ClassAbsent {
                criterion: criterion.to_string(),
                detail: format!("no rows with label {class}"),
            });
        }
        if n < MIN_ROWS_PER_CLASS {
            log::warn!("{criterion}: only {n} rows with label {class}");
        }
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (k, p) in patients.iter().enumerate() {
        groups.entry(p).or_default().push(k);
    }
    let mut order: Vec<Vec<usize>> = groups.into_values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let target: [[f64; 2]; 3] = ratios.map(|r| [r * total[0] as f64, r * total[1] as f64]);
    let mut filled = [[0usize; 2]; 3];
    let mut parts: [Vec<usize>; 3] = Default::default();
    for members in order {
        let mut counts = [0usize; 2];
        for &k in &members {
            counts[usize::from(y[k])] += 1;
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for s in 0..3 {
            let score: f64 = (0..2)
                .map(|c| counts[c] as f64 * (target[s][c] - filled[s][c] as f64) / total[c] as f64)
                .sum();
            if score > best_score {
                best = s;
                best_score = score;
            }
        }
        for c in 0..2 {
            filled[best][c] += counts[c];
        }
        parts[best].extend(members.iter().map(|&k| rows[k]));
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok(Split { train, val, test })
}
