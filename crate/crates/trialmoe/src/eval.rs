//! Classification metrics: precision-recall AUC (average precision), F1 at
//! a fixed threshold, ROC AUC, and accuracy.
//!
//! ROC AUC uses the rank formulation with average ranks for tied scores,
//! which equals the pairwise count with half credit for ties. PR AUC is the
//! step-summed average precision over distinct score thresholds. Both are
//! undefined unless each class occurs at least once.

use serde::{Deserialize, Serialize};

use crate::error::Error;

fn check_inputs(probs: &[f64], labels: &[u8]) -> Result<(usize, usize), Error> {
    if probs.len() != labels.len() {
        return Err(Error::UndefinedMetric(format!(
            "{} scores but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::UndefinedMetric("no predictions".into()));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite()) {
        return Err(Error::UndefinedMetric(format!("non-finite score {p}")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::UndefinedMetric(format!("label {l} is not binary")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((n_pos, labels.len() - n_pos))
}

fn require_both_classes(n_pos: usize, n_neg: usize, metric: &str) -> Result<(), Error> {
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "{metric} needs both classes, got {n_pos} positive / {n_neg} negative"
        )));
    }
    Ok(())
}

/// Area under the ROC curve via average ranks; ties between a positive and
/// a negative score count half.
pub fn roc_auc(probs: &[f64], labels: &[u8]) -> Result<f64, Error> {
    let (n_pos, n_neg) = check_inputs(probs, labels)?;
    require_both_classes(n_pos, n_neg, "ROC AUC")?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).expect("finite scores"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j averaged across the tie group.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Average precision: sum of precision-weighted recall increments over
/// distinct thresholds, descending.
pub fn pr_auc(probs: &[f64], labels: &[u8]) -> Result<f64, Error> {
    let (n_pos, n_neg) = check_inputs(probs, labels)?;
    require_both_classes(n_pos, n_neg, "PR AUC")?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).expect("finite scores"));

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && probs[order[j]] == probs[order[i]] {
            if labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// F1 of the positive class with predictions `score >= threshold`.
/// Returns 0 when there are no true positives and nothing was predicted or
/// actually positive (the 0/0 convention).
pub fn f1(probs: &[f64], labels: &[u8], threshold: f64) -> Result<f64, Error> {
    check_inputs(probs, labels)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &y) in probs.iter().zip(labels) {
        let pred = p >= threshold;
        match (pred, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / denom as f64)
}

/// Fraction of correct predictions at the threshold.
pub fn accuracy(probs: &[f64], labels: &[u8], threshold: f64) -> Result<f64, Error> {
    check_inputs(probs, labels)?;
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) == (y == 1))
        .count();
    Ok(correct as f64 / probs.len() as f64)
}

/// Bundle of the reported metrics for one prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub threshold: f64,
    pub pr_auc: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub accuracy: f64,
}

pub fn compute_metrics(probs: &[f64], labels: &[u8], threshold: f64) -> Result<MetricReport, Error> {
    Ok(MetricReport {
        n: probs.len(),
        threshold,
        pr_auc: pr_auc(probs, labels)?,
        f1: f1(probs, labels, threshold)?,
        roc_auc: roc_auc(probs, labels)?,
        accuracy: accuracy(probs, labels, threshold)?,
    })
}
