use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{pcc_map_beam, Estimator, JointEstimator};
use crate::types::{LabelVector, SparseInstance, SupportSet};

use super::{gfm, marginals_from_posterior, marginals_from_samples, support_map, support_posterior};

/// Draws per instance for sampling-based marginals.
pub const DEFAULT_SAMPLE_COUNT: usize = 1000;

/// Default PCC beam width for MAP decoding.
pub const DEFAULT_BEAM_WIDTH: usize = 10;

/// MAP prediction: thresholded marginals for BR, beam search for PCC and
/// support-restricted MAP for CBM and the CRF.
pub fn map_predict(
    estimator: &Estimator,
    x: &SparseInstance,
    support: Option<&SupportSet>,
    beam_width: usize,
) -> Result<LabelVector> {
    match estimator {
        Estimator::Br(m) => {
            let bits: Vec<bool> = m.marginals(x)?.into_iter().map(|p| p > 0.5).collect();
            Ok(LabelVector::from_bits(&bits))
        }
        Estimator::Pcc(m) => pcc_map_beam(m, x, beam_width),
        Estimator::Cbm(_) | Estimator::Crf(_) => {
            let support = support.ok_or_else(|| missing_support(estimator.kind()))?;
            Ok(support_map(&support_posterior(estimator, x, support)?))
        }
    }
}

fn missing_support(what: &str) -> Error {
    Error::InvalidConfig(format!("{what} prediction needs a support set"))
}

/// How a joint estimator is turned into a label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Map,
    SupportMap,
    SupportGfm,
    SampleGfm,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Map, Strategy::SupportMap, Strategy::SupportGfm, Strategy::SampleGfm];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Map => "map",
            Strategy::SupportMap => "support-map",
            Strategy::SupportGfm => "support-gfm",
            Strategy::SampleGfm => "sample-gfm",
        }
    }

    pub fn uses_gfm(self) -> bool {
        matches!(self, Strategy::SupportGfm | Strategy::SampleGfm)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown prediction strategy `{s}`")))
    }
}

/// A prediction strategy with its parameters.
///
/// Sampling uses one ChaCha stream per instance index, so results do not
/// depend on how instances are spread across threads.
#[derive(Debug, Clone)]
pub struct Predictor<'s> {
    pub strategy: Strategy,
    pub support: Option<&'s SupportSet>,
    pub beam_width: usize,
    pub sample_count: usize,
    pub seed: u64,
}

impl<'s> Predictor<'s> {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            support: None,
            beam_width: DEFAULT_BEAM_WIDTH,
            sample_count: DEFAULT_SAMPLE_COUNT,
            seed: 0,
        }
    }

    pub fn with_support(mut self, support: &'s SupportSet) -> Self {
        self.support = Some(support);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Rejects combinations that cannot run.
    pub fn check(&self, estimator: &Estimator) -> Result<()> {
        let needs_support = match self.strategy {
            Strategy::Map => matches!(estimator, Estimator::Cbm(_) | Estimator::Crf(_)),
            Strategy::SupportMap | Strategy::SupportGfm => true,
            Strategy::SampleGfm => false,
        };
        if needs_support {
            match self.support {
                None => return Err(missing_support(self.strategy.as_str())),
                Some(s) if s.is_empty() => return Err(Error::Empty("support is empty".into())),
                Some(s) if s.combinations()[0].num_labels() != estimator.num_labels() => {
                    return Err(Error::LabelSpaceMismatch {
                        expected: estimator.num_labels(),
                        actual: s.combinations()[0].num_labels(),
                    })
                }
                Some(_) => {}
            }
        }
        if self.strategy == Strategy::SampleGfm {
            if !estimator.is_normalized() {
                return Err(Error::Unsupported(format!(
                    "sample-gfm needs a samplable estimator, not {}",
                    estimator.kind()
                )));
            }
            if self.sample_count == 0 {
                return Err(Error::InvalidConfig("sample count must be positive".into()));
            }
        }
        if self.strategy == Strategy::Map && matches!(estimator, Estimator::Pcc(_)) && self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam width must be at least 1".into()));
        }
        Ok(())
    }

    /// Prediction for instance number `index` of a batch.
    pub fn predict(&self, estimator: &Estimator, x: &SparseInstance, index: usize) -> Result<LabelVector> {
        match self.strategy {
            Strategy::Map => map_predict(estimator, x, self.support, self.beam_width),
            Strategy::SupportMap => Ok(support_map(&support_posterior(estimator, x, self.support()?)?)),
            Strategy::SupportGfm => {
                let post = support_posterior(estimator, x, self.support()?)?;
                Ok(gfm(&marginals_from_posterior(&post)).labels)
            }
            Strategy::SampleGfm => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(index as u64);
                let samples = estimator.sample_many(x, self.sample_count, &mut rng)?;
                Ok(gfm(&marginals_from_samples(&samples, estimator.num_labels())?).labels)
            }
        }
    }

    /// Predictions for a batch, computed in parallel.
    pub fn predict_all(&self, estimator: &Estimator, instances: &[SparseInstance]) -> Result<Vec<LabelVector>> {
        self.check(estimator)?;
        instances
            .par_iter()
            .enumerate()
            .map(|(i, x)| self.predict(estimator, x, i))
            .collect()
    }

    fn support(&self) -> Result<&'s SupportSet> {
        self.support.ok_or_else(|| missing_support(self.strategy.as_str()))
    }
}
