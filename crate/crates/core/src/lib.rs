//! Bayes estimators for linear inverse problems `y = Ax + ε` under
//! (degenerate) Gaussian-mixture priors, their supervised and unsupervised
//! training, sparsity-promoting baselines, synthetic datasets and an
//! experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod datasets;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod supervised;
pub mod unsupervised;

pub use error::{Error, Result};
pub use estimator::{PosteriorWeights, PreparedEstimator};
pub use model::{
    sample_mixture, sample_noise, ForwardOperator, GaussianBlur, MixtureModel, NoiseModel,
};
pub use rng::SeededRng;
