use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, normalize_rows};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::SeededRng;

/// Transform applied to signals before clustering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    #[default]
    Identity,
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub clusters: usize,
    /// Ridge parameter of the regression affinity; `None` uses
    /// `1e-2 · trace(XXᵀ)/N`.
    pub lsr_lambda: Option<f64>,
    pub preprocessing: Preprocessing,
    /// Embedding dimension; `None` uses the cluster count.
    pub spectral_dims: Option<usize>,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            clusters: 1,
            lsr_lambda: None,
            preprocessing: Preprocessing::Identity,
            spectral_dims: None,
            kmeans_restarts: 10,
            seed: 0,
        }
    }
}

impl ClusteringConfig {
    pub fn with_clusters(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::Config("cluster count must be at least 1".into()));
        }
        if let Some(l) = self.lsr_lambda {
            if !(l > 0.0) {
                return Err(Error::Config(format!(
                    "lsr_lambda must be positive, got {l}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    /// Set when the affinity had an all-zero row and plain k-means on the
    /// inputs was used instead.
    pub fallback: bool,
}

/// `d[k] = x[k+1] − x[k]`.
pub fn finite_difference(x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "finite difference needs n >= 2, got {}",
            x.len()
        )));
    }
    Ok(DVector::from_fn(x.len() - 1, |k, _| x[k + 1] - x[k]))
}

/// Row-wise [`finite_difference`].
pub fn finite_difference_rows(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() < 2 {
        return Err(Error::InvalidArgument(format!(
            "finite difference needs n >= 2, got {}",
            x.ncols()
        )));
    }
    Ok(DMatrix::from_fn(x.nrows(), x.ncols() - 1, |j, k| {
        x[(j, k + 1)] - x[(j, k)]
    }))
}

pub fn preprocess(x: &DMatrix<f64>, kind: Preprocessing) -> Result<DMatrix<f64>> {
    match kind {
        Preprocessing::Identity => Ok(x.clone()),
        Preprocessing::FiniteDifference => finite_difference_rows(x),
    }
}

/// Least-squares-regression coefficients `Z = (G + λI)⁻¹G`, `G = XXᵀ`.
///
/// Computed through the eigendecomposition of the smaller Gram matrix,
/// `Z = U diag(s/(s+λ)) Uᵀ` with `G = U diag(s) Uᵀ`.
pub fn lsr_coefficients(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (count, p) = x.shape();
    let (u, s) = if p < count {
        let eig = linalg::sorted_eigen(&x.tr_mul(x));
        let top = eig.values[0].max(0.0);
        let rank = eig
            .values
            .iter()
            .take_while(|&&v| v > 1e-12 * top && v > 0.0)
            .count();
        let mut u = DMatrix::zeros(count, rank);
        for k in 0..rank {
            let col = x * eig.vectors.column(k) / eig.values[k].sqrt();
            u.set_column(k, &col);
        }
        (u, eig.values.rows(0, rank).into_owned())
    } else {
        let eig = linalg::sorted_eigen(&(x * x.transpose()));
        let top = eig.values[0].max(0.0);
        let rank = eig
            .values
            .iter()
            .take_while(|&&v| v > 1e-12 * top && v > 0.0)
            .count();
        (
            eig.vectors.columns(0, rank).into_owned(),
            eig.values.rows(0, rank).into_owned(),
        )
    };
    let scaled = DMatrix::from_fn(count, u.ncols(), |j, k| u[(j, k)] * s[k] / (s[k] + lambda));
    scaled * u.transpose()
}

/// Default ridge parameter `1e-2 · trace(XXᵀ)/N`.
pub fn default_lsr_lambda(x: &DMatrix<f64>) -> f64 {
    1e-2 * x.norm_squared() / x.nrows() as f64
}

/// Top `k` eigenvectors of a symmetric matrix with eigenvalues in `[−1, 1]`.
///
/// Subspace iteration on `M + I` with an oversampled block and Rayleigh-Ritz
/// extraction; falls back to a full eigendecomposition if it stalls.
pub(crate) fn top_eigenvectors(m: &DMatrix<f64>, k: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let n = m.nrows();
    let block = (2 * k + 10).min(n);
    if n <= 400 || block >= n / 2 {
        return linalg::sorted_eigen(m).vectors.columns(0, k).into_owned();
    }
    let shifted = m + DMatrix::identity(n, n);
    let mut q = DMatrix::from_fn(n, block, |_, _| rng.normal()).qr().q();
    for iter in 1..=2000 {
        q = (&shifted * &q).qr().q();
        if iter % 10 == 0 {
            let small = q.tr_mul(&(&shifted * &q));
            let eig = linalg::sorted_eigen(&small);
            let ritz = &q * eig.vectors.columns(0, k);
            let mut worst: f64 = 0.0;
            for c in 0..k {
                let v = ritz.column(c);
                let resid = &shifted * v - v * eig.values[c];
                worst = worst.max(resid.norm());
            }
            if worst < 1e-8 {
                return ritz;
            }
        }
    }
    linalg::sorted_eigen(m).vectors.columns(0, k).into_owned()
}

/// Subspace clustering of the rows of `x`: regression affinity
/// `W = |Z| + |Zᵀ|`, normalized spectral embedding, then k-means.
pub fn subspace_cluster(x: &DMatrix<f64>, config: &ClusteringConfig) -> Result<Clustering> {
    config.validate()?;
    let count = x.nrows();
    let k = config.clusters;
    if count < k {
        return Err(Error::InvalidArgument(format!(
            "{count} samples cannot form {k} clusters"
        )));
    }
    let rng = SeededRng::with_stream(config.seed, 0x5c);
    if k == 1 {
        return Ok(Clustering {
            labels: vec![0; count],
            fallback: false,
        });
    }
    let lambda = config.lsr_lambda.unwrap_or_else(|| default_lsr_lambda(x));
    let fallback = |rng: &SeededRng| -> Result<Clustering> {
        Ok(Clustering {
            labels: kmeans(x, k, config.kmeans_restarts, rng)?.labels,
            fallback: true,
        })
    };
    if !(lambda > 0.0) {
        return fallback(&rng);
    }
    let z = lsr_coefficients(x, lambda);
    let w = DMatrix::from_fn(count, count, |i, j| z[(i, j)].abs() + z[(j, i)].abs());
    let degrees: Vec<f64> = (0..count).map(|i| w.row(i).sum()).collect();
    if degrees.iter().any(|&d| !(d > 0.0)) {
        return fallback(&rng);
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let normalized = DMatrix::from_fn(count, count, |i, j| w[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let dims = config.spectral_dims.unwrap_or(k).clamp(1, count);
    let mut embedding = top_eigenvectors(&normalized, dims, &mut rng.derive(1));
    normalize_rows(&mut embedding);
    let labels = kmeans(&embedding, k, config.kmeans_restarts, &rng.derive(2))?.labels;
    Ok(Clustering {
        labels,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unsupervised::kmeans::clustering_accuracy;

    #[test]
    fn finite_difference_cases() {
        let c = DVector::from_element(5, 2.0);
        assert_eq!(finite_difference(&c).unwrap(), DVector::zeros(4));
        let ramp = DVector::from_fn(5, |i, _| 0.5 * i as f64);
        assert_eq!(
            finite_difference(&ramp).unwrap(),
            DVector::from_element(4, 0.5)
        );
        let step = DVector::from_fn(6, |i, _| if i > 2 { 1.5 } else { 0.0 });
        assert_eq!(
            finite_difference(&step).unwrap(),
            DVector::from_vec(vec![0.0, 0.0, 1.5, 0.0, 0.0])
        );
        assert!(finite_difference(&DVector::zeros(1)).is_err());
    }

    #[test]
    fn lsr_matches_direct_formula() {
        let mut rng = SeededRng::new(3);
        for (count, p) in [(8, 3), (4, 6)] {
            let x = DMatrix::from_fn(count, p, |_, _| rng.normal());
            let g = &x * x.transpose();
            let lambda = 0.3;
            let direct = (&g + DMatrix::identity(count, count) * lambda)
                .try_inverse()
                .unwrap()
                * &g;
            assert!((lsr_coefficients(&x, lambda) - direct).amax() < 1e-10);
        }
    }

    #[test]
    fn single_cluster_is_trivial() {
        let x = DMatrix::from_fn(7, 2, |j, k| (j + k) as f64);
        let c = subspace_cluster(&x, &ClusteringConfig::with_clusters(1, 0)).unwrap();
        assert_eq!(c.labels, vec![0; 7]);
    }

    #[test]
    fn orthogonal_lines_are_separated() {
        let mut rng = SeededRng::new(10);
        let x = DMatrix::from_fn(100, 3, |j, k| {
            let t = 1.0 + rng.uniform();
            match (j < 50, k) {
                (true, 0) => t * if j % 2 == 0 { 1.0 } else { -1.0 },
                (false, 1) => t * if j % 2 == 0 { 1.0 } else { -1.0 },
                _ => 0.0,
            }
        });
        let c = subspace_cluster(&x, &ClusteringConfig::with_clusters(2, 4)).unwrap();
        let truth: Vec<usize> = (0..100).map(|j| usize::from(j >= 50)).collect();
        assert!(!c.fallback);
        assert_eq!(clustering_accuracy(&truth, &c.labels), 1.0);
    }

    #[test]
    fn zero_rows_fall_back_to_kmeans() {
        let mut x = DMatrix::from_fn(10, 2, |j, k| (j * 3 + k) as f64);
        x.row_mut(4).fill(0.0);
        let c = subspace_cluster(&x, &ClusteringConfig::with_clusters(2, 0)).unwrap();
        assert!(c.fallback);
    }

    #[test]
    fn subspace_iteration_matches_full_eigen() {
        let mut rng = SeededRng::new(2);
        let n = 450;
        let g = DMatrix::from_fn(n, 6, |_, _| rng.normal()).qr().q();
        let values = [1.0, 0.98, 0.95, 0.6, 0.5, -0.9];
        let mut m = DMatrix::zeros(n, n);
        for (c, v) in values.iter().enumerate() {
            m += g.column(c) * g.column(c).transpose() * *v;
        }
        let top = top_eigenvectors(&m, 3, &mut rng);
        let proj = top.tr_mul(&g.columns(0, 3));
        // the spanned subspace matches
        assert!((proj.tr_mul(&proj) - DMatrix::<f64>::identity(3, 3)).amax() < 1e-8);
    }
}
