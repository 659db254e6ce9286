//! The Bayes estimator `R_θ` in direct and attention form, plus a
//! quadrature oracle for small dimensions.

mod attention;
mod oracle;
mod prepared;

pub use attention::{build_attention, estimate_attention, whitening_matrix, AttentionTensors};
pub use oracle::{posterior_mean_oracle, GridSpec};
pub(crate) use prepared::LOG_2PI;
pub use prepared::{softmax, PosteriorWeights, PreparedEstimator};
