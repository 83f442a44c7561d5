//! Regularized probabilistic multi-label classifiers with F1-optimal prediction.
//!
//! Training-side regularization (elastic net, early stopping) lives in
//! [`linreg`]; the joint estimators in [`estimators`]; prediction-side
//! regularization (support inference, the general F-measure maximizer) in
//! [`fpredict`].

pub mod dataio;
pub mod error;
pub mod estimators;
pub mod fpredict;
pub mod linreg;
pub mod metrics;
pub mod types;

pub use error::{Error, Result};
pub use types::{build_support, cardinality, LabelVector, MultiLabelDataset, SparseInstance, SupportSet};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
