//! Probabilistic joint estimators `p(y|x)`.
//!
//! Every estimator can score arbitrary label combinations. BR, PCC and CBM are
//! normalized over all `2^L` combinations and can be sampled; the pairwise CRF
//! exposes unnormalized scores and is normalized over a support set instead.

mod br;
mod cbm;
mod crf;
mod pcc;

pub use br::{br_train, BrModel, BrTrainer};
pub use cbm::{cbm_train_em, CbmConfig, CbmModel, CbmTrainer, Gating};
pub use crf::{crf_support_distribution, crf_train, CrfConfig, CrfModel, CrfTrainer, PairState};
pub use pcc::{pcc_map_beam, pcc_train, PccModel, PccTrainer};

use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linreg::{softplus, ElasticNetTrainer, LinearModel};
use crate::types::{LabelVector, SparseInstance};

/// Capability contract shared by the joint estimators.
pub trait JointEstimator {
    fn num_labels(&self) -> usize;

    fn num_features(&self) -> usize;

    /// `log p(y|x)` (for the CRF, the unnormalized log score).
    fn log_joint(&self, x: &SparseInstance, y: &LabelVector) -> Result<f64>;

    /// [`JointEstimator::log_joint`] for many combinations of one instance.
    fn log_joint_many(&self, x: &SparseInstance, ys: &[LabelVector]) -> Result<Vec<f64>> {
        ys.iter().map(|y| self.log_joint(x, y)).collect()
    }

    /// One draw from `p(y|x)`.
    fn sample(&self, x: &SparseInstance, rng: &mut dyn RngCore) -> Result<LabelVector>;

    fn sample_many(
        &self,
        x: &SparseInstance,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<LabelVector>> {
        (0..count).map(|_| self.sample(x, rng)).collect()
    }

    /// Whether `exp(log_joint)` sums to one over all combinations.
    fn is_normalized(&self) -> bool {
        true
    }
}

/// Any of the four estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Br(BrModel),
    Pcc(PccModel),
    Cbm(CbmModel),
    Crf(CrfModel),
}

impl Estimator {
    pub fn kind(&self) -> &'static str {
        match self {
            Estimator::Br(_) => "br",
            Estimator::Pcc(_) => "pcc",
            Estimator::Cbm(_) => "cbm",
            Estimator::Crf(_) => "crf",
        }
    }

    fn inner(&self) -> &dyn JointEstimator {
        match self {
            Estimator::Br(m) => m,
            Estimator::Pcc(m) => m,
            Estimator::Cbm(m) => m,
            Estimator::Crf(m) => m,
        }
    }
}

impl JointEstimator for Estimator {
    fn num_labels(&self) -> usize {
        self.inner().num_labels()
    }

    fn num_features(&self) -> usize {
        self.inner().num_features()
    }

    fn log_joint(&self, x: &SparseInstance, y: &LabelVector) -> Result<f64> {
        self.inner().log_joint(x, y)
    }

    fn log_joint_many(&self, x: &SparseInstance, ys: &[LabelVector]) -> Result<Vec<f64>> {
        self.inner().log_joint_many(x, ys)
    }

    fn sample(&self, x: &SparseInstance, rng: &mut dyn RngCore) -> Result<LabelVector> {
        self.inner().sample(x, rng)
    }

    fn sample_many(
        &self,
        x: &SparseInstance,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<LabelVector>> {
        self.inner().sample_many(x, count, rng)
    }

    fn is_normalized(&self) -> bool {
        self.inner().is_normalized()
    }
}

pub(crate) fn check_instance(x: &SparseInstance, num_features: usize) -> Result<()> {
    if x.dim() != num_features {
        return Err(Error::DimensionMismatch {
            expected: num_features,
            actual: x.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_labels(y: &LabelVector, num_labels: usize) -> Result<()> {
    if y.num_labels() != num_labels {
        return Err(Error::LabelSpaceMismatch {
            expected: num_labels,
            actual: y.num_labels(),
        });
    }
    Ok(())
}

/// `(log σ(s), log(1 - σ(s)))`.
#[inline]
pub(crate) fn log_bernoulli(logit: f64) -> (f64, f64) {
    (-softplus(-logit), -softplus(logit))
}

/// Independent Bernoulli draws with the given `p(y_l = 1)`.
pub(crate) fn sample_independent(probs: &[f64], rng: &mut dyn RngCore) -> LabelVector {
    let bits: Vec<bool> = probs.iter().map(|&p| rng.gen::<f64>() < p).collect();
    LabelVector::from_bits(&bits)
}

/// Index drawn from a discrete distribution.
pub(crate) fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let mut u = rng.gen::<f64>() * probs.iter().sum::<f64>();
    for (k, &p) in probs.iter().enumerate() {
        if u < p {
            return k;
        }
        u -= p;
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Per-label training targets `y_il` as class ids.
pub(crate) fn label_column(labels: &[LabelVector], label: usize) -> Vec<usize> {
    labels.iter().map(|y| usize::from(y.contains(label))).collect()
}

/// Independent binary trainers advanced in lockstep, in parallel.
pub(crate) struct TrainerBank<'a> {
    trainers: Vec<ElasticNetTrainer<'a>>,
    iterations: usize,
    max_iterations: usize,
}

impl<'a> TrainerBank<'a> {
    pub(crate) fn new(trainers: Vec<ElasticNetTrainer<'a>>, max_iterations: usize) -> Self {
        Self {
            trainers,
            iterations: 0,
            max_iterations,
        }
    }

    pub(crate) fn models(&self) -> Vec<LinearModel> {
        self.trainers.iter().map(|t| t.model()).collect()
    }

    pub(crate) fn advance(&mut self, iterations: usize) -> Result<()> {
        let n = iterations.min(self.max_iterations.saturating_sub(self.iterations));
        self.trainers
            .par_iter_mut()
            .try_for_each(|t| t.run(n).map(|_| ()))?;
        self.iterations += n;
        Ok(())
    }

    pub(crate) fn iterations(&self) -> usize {
        self.iterations
    }

    pub(crate) fn objective(&self) -> f64 {
        self.trainers.iter().map(|t| t.objective()).sum()
    }

    pub(crate) fn is_finished(&self) -> bool {
        self.iterations >= self.max_iterations || self.trainers.iter().all(|t| t.is_converged())
    }

    pub(crate) fn run_to_end(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.advance(self.max_iterations)?;
        }
        Ok(())
    }
}
