//! F1-optimal prediction.
//!
//! A joint estimator is turned into the `L × L` marginals
//! `p(y_l = 1, |y| = s | x)` (exactly, from a posterior over a support set, or
//! from samples), and [`gfm`] picks the prediction with maximal expected F1.

mod gfm;
mod lsf;
mod posterior;
mod predict;

pub use gfm::{brute_force_best, brute_force_expected_f1, gfm, FPrediction};
pub use lsf::{lsf_marginals, lsf_train, CardinalityModel, LsfModel, LsfTrainer};
pub use posterior::{
    marginals_from_posterior, marginals_from_samples, support_map, support_posterior, MarginalMatrix,
    SupportPosterior,
};
pub use predict::{map_predict, Predictor, Strategy, DEFAULT_BEAM_WIDTH, DEFAULT_SAMPLE_COUNT};
