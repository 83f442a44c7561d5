//! Elastic-net regularized binary and multinomial logistic regression.
//!
//! The trainer minimizes
//!
//! ```text
//! -(1/W) Σ_i w_i Σ_c t_ic log p_c(x_i) + λ Σ_c [(1-α)||w_c||₂² + α||w_c||₁]
//! ```
//!
//! where `w_i` are instance weights, `W` a normalizer (the total weight unless
//! overridden) and `t_i` a one-hot or soft target distribution. Intercepts are
//! not penalized. Binary problems use a single weight vector for class 1.

mod early_stop;
mod model;
mod trainer;

pub use early_stop::{train_with_early_stopping, EarlyStopConfig, EarlyStopOutcome, Resumable};
pub use model::LinearModel;
pub use trainer::{
    elastic_net_penalty, kkt_violation, loss_gradient, mean_negative_log_likelihood, penalized_objective,
    train_elastic_net, ElasticNetTrainer, LossGradient, TrainingProblem, WeightedExample,
};

use crate::error::{Error, Result};

/// Intercepts are kept inside `[-INTERCEPT_LIMIT, INTERCEPT_LIMIT]`, which keeps
/// them finite for classes that never (or always) occur.
pub const INTERCEPT_LIMIT: f64 = 25.0;

/// Penalty strength and solver limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticNetConfig {
    /// Overall strength λ.
    pub lambda: f64,
    /// L1 ratio α.
    pub alpha: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the largest KKT violation.
    pub tolerance: f64,
}

impl Default for ElasticNetConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            alpha: 0.5,
            max_iterations: 200,
            tolerance: 1e-6,
        }
    }
}

impl ElasticNetConfig {
    pub fn new(lambda: f64, alpha: f64) -> Self {
        Self {
            lambda,
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }

    /// λα
    pub fn l1(&self) -> f64 {
        self.lambda * self.alpha
    }

    /// λ(1-α)
    pub fn l2(&self) -> f64 {
        self.lambda * (1.0 - self.alpha)
    }
}

/// `sign(z) · max(|z| - gamma, 0)`
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// `log(1 + e^s)` without overflow.
#[inline]
pub(crate) fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log Σ exp(v)` with max-subtraction; `-inf` for an empty or all `-inf` slice.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(-1.0, 2.0), 0.0);
        assert_eq!(soft_threshold(-4.0, 1.5), -2.5);
        assert_eq!(soft_threshold(2.0, 2.0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(ElasticNetConfig::new(-1.0, 0.5).validate().is_err());
        assert!(ElasticNetConfig::new(1.0, 1.5).validate().is_err());
        assert!(ElasticNetConfig::new(f64::NAN, 0.5).validate().is_err());
        assert!(ElasticNetConfig::new(0.0, 0.0).validate().is_ok());
        let zero_iters = ElasticNetConfig {
            max_iterations: 0,
            ..Default::default()
        };
        assert!(zero_iters.validate().is_err());
    }

    #[test]
    fn stable_scalar_helpers() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-1000.0).is_finite() && sigmoid(1000.0) == 1.0);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-9);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
