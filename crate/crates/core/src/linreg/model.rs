use crate::error::{Error, Result};
use crate::types::SparseInstance;

use super::{log_sum_exp, sigmoid};

/// A trained binary (`C = 2`) or multinomial (`C > 2`) logistic regression.
///
/// Binary models keep one score vector (class 1 against an implicit zero score
/// for class 0); multinomial models keep one per class. Weights are held dense
/// in memory; only nonzeros are written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    num_classes: usize,
    dim: usize,
    intercepts: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

impl LinearModel {
    /// Number of score vectors a `num_classes` model stores.
    pub fn score_vectors_for(num_classes: usize) -> usize {
        if num_classes == 2 {
            1
        } else {
            num_classes
        }
    }

    /// The all-zero model.
    pub fn zeros(num_classes: usize, dim: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "a linear model needs at least 2 classes, got {num_classes}"
            )));
        }
        let v = Self::score_vectors_for(num_classes);
        Ok(Self {
            num_classes,
            dim,
            intercepts: vec![0.0; v],
            weights: vec![vec![0.0; dim]; v],
        })
    }

    pub fn from_parts(
        num_classes: usize,
        dim: usize,
        intercepts: Vec<f64>,
        weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut model = Self::zeros(num_classes, dim)?;
        let v = model.intercepts.len();
        if intercepts.len() != v || weights.len() != v {
            return Err(Error::InvalidConfig(format!(
                "expected {v} score vectors for {num_classes} classes"
            )));
        }
        for w in &weights {
            if w.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: w.len(),
                });
            }
        }
        if intercepts
            .iter()
            .chain(weights.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig("non-finite weight".into()));
        }
        model.intercepts = intercepts;
        model.weights = weights;
        Ok(model)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_binary(&self) -> bool {
        self.num_classes == 2
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Nonzero feature weights of score vector `v`.
    pub fn sparse_weights(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights[v]
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w != 0.0)
    }

    /// Number of stored nonzero feature weights (intercepts excluded).
    pub fn nonzero_count(&self) -> usize {
        self.weights.iter().flatten().filter(|w| **w != 0.0).count()
    }

    /// Whether any score vector uses feature `j`.
    pub fn uses_feature(&self, j: usize) -> bool {
        self.weights.iter().any(|w| w[j] != 0.0)
    }

    fn check_dim(&self, x: &SparseInstance) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.dim(),
            });
        }
        Ok(())
    }

    /// Raw linear scores `w_{0v} + xᵀw_v` for each stored score vector.
    pub fn linear_scores(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self
            .intercepts
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| b + x.dot(w))
            .collect())
    }

    /// Per-class scores (binary models report `[0, s]`).
    pub fn class_scores(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        let s = self.linear_scores(x)?;
        Ok(if self.is_binary() { vec![0.0, s[0]] } else { s })
    }

    /// `p(g = c | x)` for every class.
    pub fn predict_distribution(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        let scores = self.class_scores(x)?;
        if self.is_binary() {
            let p1 = sigmoid(scores[1]);
            return Ok(vec![1.0 - p1, p1]);
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / z).collect())
    }

    /// `log p(g = c | x)` for every class.
    pub fn log_distribution(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        let scores = self.class_scores(x)?;
        let lse = log_sum_exp(&scores);
        Ok(scores.into_iter().map(|s| s - lse).collect())
    }

    /// Most probable class; exact score ties go to the smaller class id.
    pub fn predict_class(&self, x: &SparseInstance) -> Result<usize> {
        let scores = self.class_scores(x)?;
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        Ok(best)
    }

    /// `p(g = 1 | x)` of a binary model.
    pub fn positive_probability(&self, x: &SparseInstance) -> Result<f64> {
        debug_assert!(self.is_binary());
        Ok(sigmoid(self.linear_scores(x)?[0]))
    }

    /// Binary score `w_0 + xᵀw`, whose sigmoid is `p(g = 1 | x)`.
    pub fn logit(&self, x: &SparseInstance) -> Result<f64> {
        debug_assert!(self.is_binary());
        Ok(self.linear_scores(x)?[0])
    }
}
