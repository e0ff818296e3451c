use serde::{Deserialize, Serialize};

/// Probabilities are clamped this far from 0 and 1 before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub positives: usize,
    /// Mean per-row cross-entropy.
    pub loss_mean: f64,
    /// Population standard deviation of per-row cross-entropy.
    pub loss_std: f64,
    pub accuracy: f64,
    pub f1: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub flags: Vec<String>,
}

/// Area under the ROC curve via the rank-sum identity, ties counted half.
pub fn auc(y: &[u8], scores: &[f64]) -> Option<f64> {
    let n1 = y.iter().filter(|&&v| v == 1).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if y[k] == 1 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n1 * (n1 + 1)) as f64 / 2.0;
    Some(u / (n1 as f64 * n0 as f64))
}

pub fn f1_score(y: &[u8], pred: &[u8]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&t, &p) in y.iter().zip(pred) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Scores probabilities against labels at a 0.5 threshold.
pub fn evaluate(y: &[u8], prob: &[f64]) -> Metrics {
    let n = y.len();
    let positives = y.iter().filter(|&&v| v == 1).count();
    let mut flags = Vec::new();
    let losses: Vec<f64> = y
        .iter()
        .zip(prob)
        .map(|(&t, &p)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if t == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .collect();
    let (loss_mean, loss_std) = if n == 0 {
        flags.push("empty evaluation set".to_string());
        (f64::NAN, f64::NAN)
    } else {
        let m = losses.iter().sum::<f64>() / n as f64;
        let v = losses.iter().map(|l| (l - m).powi(2)).sum::<f64>() / n as f64;
        (m, v.sqrt())
    };
    let pred: Vec<u8> = prob.iter().map(|&p| u8::from(p >= 0.5)).collect();
    let correct = y.iter().zip(&pred).filter(|(a, b)| a == b).count();
    let accuracy = if n == 0 { f64::NAN } else { correct as f64 / n as f64 };
    let auc = auc(y, prob);
    if auc.is_none() && n > 0 {
        flags.push("single class in evaluation set; AUC undefined".to_string());
    }
    Metrics {
        n,
        positives,
        loss_mean,
        loss_std,
        accuracy,
        f1: f1_score(y, &pred),
        auc,
        flags,
    }
}
