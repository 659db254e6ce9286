use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Weights, means and covariances of an `L`-component Gaussian mixture.
///
/// Covariances may be degenerate. When built from factors (`Σ_i = B_i B_iᵀ`)
/// the factors are kept and used for sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureModel {
    weights: DVector<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    factors: Option<Vec<DMatrix<f64>>>,
}

impl MixtureModel {
    pub fn new(
        weights: DVector<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let model = Self {
            weights,
            means,
            covariances,
            factors: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Mixture with `Σ_i = B_i B_iᵀ`; each `B_i` is `n × r_i`.
    pub fn from_factors(
        weights: DVector<f64>,
        means: Vec<DVector<f64>>,
        factors: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let covariances = factors
            .iter()
            .map(|b| linalg::symmetrized(&(b * b.transpose())))
            .collect();
        let model = Self {
            weights,
            means,
            covariances,
            factors: Some(factors),
        };
        model.validate()?;
        Ok(model)
    }

    /// Rebuilds a model from stored parts without recomputing covariances.
    pub(crate) fn from_parts(
        weights: DVector<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
        factors: Option<Vec<DMatrix<f64>>>,
    ) -> Result<Self> {
        let model = Self {
            weights,
            means,
            covariances,
            factors,
        };
        model.validate()?;
        Ok(model)
    }

    /// Degenerate mixture supported on coordinate subspaces: zero means,
    /// `Σ_i` the diagonal indicator of `supports[i]`, uniform weights.
    pub fn from_coordinate_supports(n: usize, s: usize, supports: &[Vec<usize>]) -> Result<Self> {
        if supports.is_empty() {
            return Err(Error::InvalidModel(
                "at least one support is required".into(),
            ));
        }
        let mut covariances = Vec::with_capacity(supports.len());
        for (i, support) in supports.iter().enumerate() {
            if support.len() != s {
                return Err(Error::InvalidModel(format!(
                    "support {i} has {} indices, expected {s}",
                    support.len()
                )));
            }
            let mut cov = DMatrix::zeros(n, n);
            for &k in support {
                if k >= n {
                    return Err(Error::InvalidModel(format!(
                        "support index {k} out of range 0..{n}"
                    )));
                }
                if cov[(k, k)] != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "duplicate index {k} in support {i}"
                    )));
                }
                cov[(k, k)] = 1.0;
            }
            covariances.push(cov);
        }
        let l = supports.len();
        Self::new(
            DVector::from_element(l, 1.0 / l as f64),
            vec![DVector::zeros(n); l],
            covariances,
        )
    }

    fn validate(&self) -> Result<()> {
        let l = self.weights.len();
        if l == 0 {
            return Err(Error::InvalidModel(
                "mixture needs at least one component".into(),
            ));
        }
        if self.means.len() != l || self.covariances.len() != l {
            return Err(Error::InvalidModel(format!(
                "{l} weights but {} means and {} covariances",
                self.means.len(),
                self.covariances.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidModel(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let n = self.means[0].len();
        for (i, (mu, cov)) in self.means.iter().zip(&self.covariances).enumerate() {
            if mu.len() != n || cov.nrows() != n || cov.ncols() != n {
                return Err(Error::InvalidModel(format!(
                    "component {i} has inconsistent dimensions"
                )));
            }
            if mu.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "component {i} has non-finite entries"
                )));
            }
            if linalg::asymmetry(cov) > 1e-12 {
                return Err(Error::InvalidModel(format!(
                    "covariance {i} is not symmetric"
                )));
            }
            if !linalg::is_psd(cov) {
                return Err(Error::InvalidModel(format!(
                    "covariance {i} is not positive semidefinite"
                )));
            }
        }
        if let Some(factors) = &self.factors {
            for (i, (b, cov)) in factors.iter().zip(&self.covariances).enumerate() {
                if b.nrows() != n {
                    return Err(Error::InvalidModel(format!(
                        "factor {i} has {} rows, expected {n}",
                        b.nrows()
                    )));
                }
                let rebuilt = b * b.transpose();
                let scale = cov.norm().max(f64::MIN_POSITIVE);
                if (rebuilt - cov).norm() / scale > 1e-10 && cov.norm() > 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "factor {i} does not reproduce its covariance"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn factors(&self) -> Option<&[DMatrix<f64>]> {
        self.factors.as_deref()
    }

    /// `s = max_i rank(Σ_i)`.
    pub fn sparsity_level(&self) -> usize {
        self.covariances
            .iter()
            .map(linalg::psd_rank)
            .max()
            .unwrap_or(0)
    }

    /// Factors used for sampling: the stored ones, or eigenfactors of `Σ_i`.
    pub fn sampling_factors(&self) -> Vec<DMatrix<f64>> {
        match &self.factors {
            Some(f) => f.clone(),
            None => self.covariances.iter().map(linalg::psd_factor).collect(),
        }
    }

    /// Drops zero-weight components and renormalizes. Returns the kept
    /// original indices alongside the pruned model.
    pub fn pruned(&self) -> (Self, Vec<usize>) {
        let kept: Vec<usize> = (0..self.components())
            .filter(|&i| self.weights[i] > 0.0)
            .collect();
        if kept.len() == self.components() {
            return (self.clone(), kept);
        }
        let total: f64 = kept.iter().map(|&i| self.weights[i]).sum();
        let model = Self {
            weights: DVector::from_iterator(
                kept.len(),
                kept.iter().map(|&i| self.weights[i] / total),
            ),
            means: kept.iter().map(|&i| self.means[i].clone()).collect(),
            covariances: kept.iter().map(|&i| self.covariances[i].clone()).collect(),
            factors: self
                .factors
                .as_ref()
                .map(|f| kept.iter().map(|&i| f[i].clone()).collect()),
        };
        (model, kept)
    }
}
