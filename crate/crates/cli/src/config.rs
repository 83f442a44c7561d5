//! Run configuration shared by every subcommand.

use std::fmt;
use std::str::FromStr;

use mlreg::estimators::{CbmConfig, CrfConfig};
use mlreg::fpredict::{Strategy, DEFAULT_BEAM_WIDTH, DEFAULT_SAMPLE_COUNT};
use mlreg::linreg::ElasticNetConfig;
use serde::{Serialize, Serializer};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Br,
    Pcc,
    Cbm,
    Crf,
    Lsf,
}

impl Classifier {
    pub fn as_str(self) -> &'static str {
        match self {
            Classifier::Br => "br",
            Classifier::Pcc => "pcc",
            Classifier::Cbm => "cbm",
            Classifier::Crf => "crf",
            Classifier::Lsf => "lsf",
        }
    }

    /// CRF is trained with an L2 penalty only.
    pub fn supports_l1(self) -> bool {
        self != Classifier::Crf
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Classifier {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        <Self as clap::ValueEnum>::from_str(s, true).map_err(|_| CliError::Usage(format!("unknown classifier `{s}`")))
    }
}

fn strategy_name<S: Serializer>(strategy: &Strategy, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(strategy.as_str())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub classifier: Classifier,
    #[serde(serialize_with = "strategy_name")]
    pub prediction: Strategy,
    pub lambda: f64,
    pub alpha: f64,
    /// Mixture components for CBM.
    pub components: usize,
    pub beam_width: usize,
    pub sample_count: usize,
    pub pcc_order: Option<Vec<usize>>,
    pub crf_pairwise: bool,
    pub early_stop: bool,
    /// Validation checks without improvement before early stopping halts.
    pub patience: usize,
    /// Solver iterations for the regressions and the CRF.
    pub max_iterations: usize,
    pub em_iterations: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            classifier: Classifier::Br,
            prediction: Strategy::SupportGfm,
            lambda: 1e-3,
            alpha: 0.5,
            components: 20,
            beam_width: DEFAULT_BEAM_WIDTH,
            sample_count: DEFAULT_SAMPLE_COUNT,
            pcc_order: None,
            crf_pairwise: true,
            early_stop: false,
            patience: 5,
            max_iterations: 300,
            em_iterations: 50,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.classifier == Classifier::Crf && self.prediction == Strategy::SampleGfm {
            return bad("sample-gfm is not available for crf; its distribution is only normalized over the support".into());
        }
        if self.classifier == Classifier::Lsf && !self.prediction.uses_gfm() {
            return bad(format!("lsf predicts with gfm only, not `{}`", self.prediction));
        }
        if self.classifier != Classifier::Pcc && self.pcc_order.is_some() {
            return bad("--pcc-order only applies to pcc".into());
        }
        if self.components == 0 || self.beam_width == 0 || self.sample_count == 0 {
            return bad("components, beam width and sample count must be positive".into());
        }
        if self.max_iterations == 0 || self.em_iterations == 0 {
            return bad("iteration limits must be positive".into());
        }
        self.penalty().validate()?;
        Ok(())
    }

    pub fn penalty(&self) -> ElasticNetConfig {
        ElasticNetConfig {
            max_iterations: self.max_iterations,
            ..ElasticNetConfig::new(self.lambda, self.alpha)
        }
    }

    pub fn cbm_config(&self) -> CbmConfig {
        CbmConfig {
            components: self.components,
            max_em_iterations: self.em_iterations,
            seed: self.seed,
            ..CbmConfig::default()
        }
    }

    /// The CRF takes `lambda` as its L2 strength and ignores `alpha`.
    pub fn crf_config(&self) -> CrfConfig {
        CrfConfig {
            l2_lambda: self.lambda,
            include_pairwise: self.crf_pairwise,
            max_iterations: self.max_iterations,
            ..CrfConfig::default()
        }
    }

    /// `key=value` pairs recorded in model archives.
    pub fn metadata(&self) -> Vec<(&'static str, String)> {
        let mut pairs = vec![
            ("classifier", self.classifier.to_string()),
            ("prediction", self.prediction.to_string()),
            ("lambda", format!("{:?}", self.lambda)),
            ("alpha", format!("{:?}", self.alpha)),
            ("beam_width", self.beam_width.to_string()),
            ("sample_count", self.sample_count.to_string()),
            ("early_stop", self.early_stop.to_string()),
            ("seed", self.seed.to_string()),
        ];
        match self.classifier {
            Classifier::Cbm => pairs.push(("components", self.components.to_string())),
            Classifier::Crf => pairs.push(("crf_pairwise", self.crf_pairwise.to_string())),
            _ => {}
        }
        pairs
    }
}
