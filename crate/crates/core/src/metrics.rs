//! Instance-based multi-label evaluation.
//!
//! Empty-set conventions: `F(∅, ∅) = 1`; F is 0 when exactly one side is
//! empty. Precision with an empty prediction is 1 if the truth is also empty
//! and 0 otherwise; recall mirrors this for an empty truth.

use crate::error::{Error, Result};
use crate::types::LabelVector;

fn check_space(y: &LabelVector, y_pred: &LabelVector) -> Result<()> {
    if y.num_labels() != y_pred.num_labels() {
        return Err(Error::LabelSpaceMismatch {
            expected: y.num_labels(),
            actual: y_pred.num_labels(),
        });
    }
    Ok(())
}

/// `2 |y ∩ y'| / (|y| + |y'|)`.
pub fn instance_f1(y: &LabelVector, y_pred: &LabelVector) -> f64 {
    let denom = y.cardinality() + y_pred.cardinality();
    if denom == 0 {
        return 1.0;
    }
    2.0 * y.intersection_size(y_pred) as f64 / denom as f64
}

pub fn precision(y: &LabelVector, y_pred: &LabelVector) -> f64 {
    match y_pred.cardinality() {
        0 if y.is_empty() => 1.0,
        0 => 0.0,
        n => y.intersection_size(y_pred) as f64 / n as f64,
    }
}

pub fn recall(y: &LabelVector, y_pred: &LabelVector) -> f64 {
    precision(y_pred, y)
}

/// Fraction of the `L` label bits on which the two vectors disagree.
pub fn hamming_loss(y: &LabelVector, y_pred: &LabelVector) -> f64 {
    let common = y.intersection_size(y_pred);
    let disagreements = y.cardinality() + y_pred.cardinality() - 2 * common;
    disagreements as f64 / y.num_labels() as f64
}

/// Dataset-level means of the per-instance metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub mean_instance_f1: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub subset_accuracy: f64,
    pub hamming_loss: f64,
    pub n_instances: usize,
}

impl EvalReport {
    /// `key=value` lines, one per field.
    pub fn to_key_values(&self) -> String {
        format!(
            "instance_f1={}\nprecision={}\nrecall={}\nsubset_accuracy={}\nhamming_loss={}\nn_instances={}\n",
            self.mean_instance_f1,
            self.mean_precision,
            self.mean_recall,
            self.subset_accuracy,
            self.hamming_loss,
            self.n_instances
        )
    }
}

pub fn evaluate(truths: &[LabelVector], predictions: &[LabelVector]) -> Result<EvalReport> {
    if truths.len() != predictions.len() {
        return Err(Error::InvalidDataset(format!(
            "{} truths but {} predictions",
            truths.len(),
            predictions.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::Empty("nothing to evaluate".into()));
    }
    let (mut f1, mut p, mut r, mut exact, mut hamming) = (0.0, 0.0, 0.0, 0usize, 0.0);
    for (y, y_pred) in truths.iter().zip(predictions) {
        check_space(y, y_pred)?;
        f1 += instance_f1(y, y_pred);
        p += precision(y, y_pred);
        r += recall(y, y_pred);
        hamming += hamming_loss(y, y_pred);
        if y == y_pred {
            exact += 1;
        }
    }
    let n = truths.len() as f64;
    Ok(EvalReport {
        mean_instance_f1: f1 / n,
        mean_precision: p / n,
        mean_recall: r / n,
        subset_accuracy: exact as f64 / n,
        hamming_loss: hamming / n,
        n_instances: truths.len(),
    })
}

/// Mean instance-F1 only.
pub fn mean_instance_f1(truths: &[LabelVector], predictions: &[LabelVector]) -> Result<f64> {
    evaluate(truths, predictions).map(|r| r.mean_instance_f1)
}
