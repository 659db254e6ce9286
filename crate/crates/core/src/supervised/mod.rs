//! Supervised learning of `θ` by minimizing the empirical risk.

mod objective;
mod params;
mod train;

pub use objective::{
    empirical_risk, grad, regularizer, regularizer_grad, Objective, RegularizerKind,
};
pub use params::TrainableParams;
pub use train::{default_init, train, Optimizer, TrainConfig, TrainOutcome};
