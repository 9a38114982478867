//! Micro-averaged set metrics over per-user label sets.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::Real;

/// Micro-averaged (precision, F1) over all (user, category) cells:
/// precision = TP/(TP+FP), F1 = 2TP/(2TP+FP+FN). A zero denominator scores
/// 0 by convention, so an empty prediction against empty truth is 0, not 1.
pub fn micro_scores(
    predicted: &[BTreeSet<usize>],
    truth: &[BTreeSet<usize>],
) -> Result<(Real, Real)> {
    if predicted.len() != truth.len() {
        return Err(Error::DimMismatch(format!(
            "{} predictions for {} truth sets",
            predicted.len(),
            truth.len()
        )));
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        tp += p.intersection(t).count();
        fp += p.difference(t).count();
        fn_ += t.difference(p).count();
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as Real / (tp + fp) as Real };
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as Real / denom as Real };
    Ok((precision, f1))
}

/// Wraps single-label predictions as singleton sets; micro precision and F1
/// then both equal plain accuracy.
pub fn singleton_sets(labels: &[usize]) -> Vec<BTreeSet<usize>> {
    labels.iter().map(|&l| BTreeSet::from([l])).collect()
}
