use nalgebra::{DMatrix, DVector};

use super::cluster::{preprocess, subspace_cluster, ClusteringConfig};
use crate::error::{Error, Result};
use crate::estimator::PreparedEstimator;
use crate::linalg;
use crate::model::{ForwardOperator, MixtureModel, NoiseModel};

/// Per-cluster weights, means and covariances (divisor `N_i`).
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStats {
    pub weights: DVector<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Original label of each kept cluster; empty clusters are dropped.
    pub cluster_ids: Vec<usize>,
}

impl ClusterStats {
    pub fn effective_clusters(&self) -> usize {
        self.weights.len()
    }

    pub fn to_model(&self) -> Result<MixtureModel> {
        MixtureModel::new(
            self.weights.clone(),
            self.means.clone(),
            self.covariances.clone(),
        )
    }
}

/// Row indices of each label `0..clusters`.
pub fn group_indices(labels: &[usize], clusters: usize) -> Result<Vec<Vec<usize>>> {
    let mut groups = vec![Vec::new(); clusters];
    for (j, &l) in labels.iter().enumerate() {
        if l >= clusters {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range 0..{clusters}"
            )));
        }
        groups[l].push(j);
    }
    Ok(groups)
}

/// Empirical weights, means and covariances of the labeled rows of `x`.
pub fn estimate_params(
    x: &DMatrix<f64>,
    labels: &[usize],
    clusters: usize,
) -> Result<ClusterStats> {
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let groups = group_indices(labels, clusters)?;
    let total = x.nrows() as f64;
    let mut weights = Vec::new();
    let mut means = Vec::new();
    let mut covariances = Vec::new();
    let mut cluster_ids = Vec::new();
    for (c, rows) in groups.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let (mean, cov) = linalg::mean_and_covariance(x, rows);
        weights.push(rows.len() as f64 / total);
        means.push(mean);
        covariances.push(cov);
        cluster_ids.push(c);
    }
    // count fractions can be off by an ulp; renormalize
    let sum: f64 = weights.iter().sum();
    Ok(ClusterStats {
        weights: DVector::from_iterator(weights.len(), weights.iter().map(|w| w / sum)),
        means,
        covariances,
        cluster_ids,
    })
}

/// Result of the two-step unsupervised fit.
#[derive(Clone, Debug)]
pub struct UnsupervisedFit {
    pub estimator: PreparedEstimator,
    pub stats: ClusterStats,
    pub labels: Vec<usize>,
    pub fallback: bool,
}

/// Moments per cluster from given labels, assembled into an estimator.
pub fn fit_with_labels(
    x: &DMatrix<f64>,
    labels: &[usize],
    clusters: usize,
    operator: &ForwardOperator,
    noise: &NoiseModel,
) -> Result<UnsupervisedFit> {
    let stats = estimate_params(x, labels, clusters)?;
    let estimator = PreparedEstimator::new(&stats.to_model()?, operator, noise)?;
    Ok(UnsupervisedFit {
        estimator,
        stats,
        labels: labels.to_vec(),
        fallback: false,
    })
}

/// Clusters the (preprocessed) clean training signals, then fits moments
/// on the raw signals.
pub fn fit_unsupervised(
    x: &DMatrix<f64>,
    operator: &ForwardOperator,
    noise: &NoiseModel,
    config: &ClusteringConfig,
) -> Result<UnsupervisedFit> {
    let features = preprocess(x, config.preprocessing)?;
    let clustering = subspace_cluster(&features, config)?;
    let mut fit = fit_with_labels(x, &clustering.labels, config.clusters, operator, noise)?;
    fit.fallback = clustering.fallback;
    Ok(fit)
}
