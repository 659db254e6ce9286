//! Two-step unsupervised fit: subspace clustering, then empirical moments
//! per cluster.

mod cluster;
mod fit;
mod kmeans;

pub use cluster::{
    default_lsr_lambda, finite_difference, finite_difference_rows, lsr_coefficients, preprocess,
    subspace_cluster, Clustering, ClusteringConfig, Preprocessing,
};
pub use fit::{
    estimate_params, fit_unsupervised, fit_with_labels, group_indices, ClusterStats,
    UnsupervisedFit,
};
pub use kmeans::{clustering_accuracy, kmeans, KMeansResult};
