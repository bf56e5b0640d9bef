//! Exact rank-based evaluation metrics.

use crate::error::{Error, Result};

/// Area under the ROC curve via the rank statistic: the probability that a
/// random positive outranks a random negative, ties counting one half.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::contract(format!(
            "auc: {} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "auc needs both positive and negative items".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // average ranks within tied score groups (1-based)
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }

    let rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l)
        .map(|(_, &r)| r)
        .sum();
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Average precision: mean over positives of the precision at their rank,
/// ranking by descending score with ties broken by stable input order.
pub fn average_precision(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::contract(format!(
            "average_precision: {} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one positive".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if labels[idx] {
            hits += 1;
            total += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(total / pos as f64)
}

/// Fraction of exact matches.
pub fn accuracy(truth: &[usize], predictions: &[usize]) -> Result<f64> {
    if truth.len() != predictions.len() {
        return Err(Error::contract(format!(
            "accuracy: {} labels vs {} predictions",
            truth.len(),
            predictions.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::contract("accuracy of an empty set".to_string()));
    }
    let hits = truth
        .iter()
        .zip(predictions)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}
