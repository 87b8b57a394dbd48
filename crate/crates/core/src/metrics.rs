//! Classification metrics: accuracy, MCC and rank-based AUC.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sqrt;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        assert_eq!(predicted.len(), actual.len());
        let mut c = ConfusionCounts::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    match c.total() {
        0 => Err(Error::UndefinedMetric("accuracy of an empty sample")),
        n => Ok((c.tp + c.tn) as f64 / n as f64),
    }
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.iter().any(|&f| f == 0.0) {
        return 0.0;
    }
    let denom = sqrt(factors[0] * factors[1]) * sqrt(factors[2] * factors[3]);
    ((tp * tn - fp * fn_) / denom).clamp(-1.0, 1.0)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            context: "auc",
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("auc needs both classes"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("auc of NaN scores"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the Mann-Whitney count, kept integral: 2 per win, 1 per tie.
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let pos_here = order[i..j].iter().filter(|&&k| labels[k]).count() as u128;
        let neg_here = (j - i) as u128 - pos_here;
        doubled += pos_here * (2 * neg_below + neg_here);
        neg_below += neg_here;
        i = j;
    }
    Ok(doubled as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Movement,
    Volatility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub accuracy: f64,
    pub mcc: f64,
    pub auc: Option<f64>,
    pub n_positive: u64,
    pub n_negative: u64,
    pub counts: ConfusionCounts,
}

/// `probs[i]` is the predicted probability of the positive class (Up, or an
/// abnormal move). Pass only non-excluded days for the movement task.
pub fn evaluate(probs: &[f64], labels: &[bool], task: Task) -> Result<MetricsReport> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension {
            context: "evaluate",
            expected: labels.len(),
            got: probs.len(),
        });
    }
    let predicted: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
    let counts = ConfusionCounts::from_predictions(&predicted, labels);
    let n_positive = labels.iter().filter(|&&l| l).count() as u64;
    let auc = match task {
        Task::Movement => None,
        Task::Volatility => auc(probs, labels).ok(),
    };
    Ok(MetricsReport {
        task,
        accuracy: accuracy(&counts)?,
        mcc: mcc(&counts),
        auc,
        n_positive,
        n_negative: labels.len() as u64 - n_positive,
        counts,
    })
}
