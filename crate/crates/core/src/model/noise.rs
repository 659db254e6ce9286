use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg;

/// Zero-mean Gaussian noise `E ~ N(0, Σ_E)` with invertible covariance.
#[derive(Clone, Debug, PartialEq)]
pub enum NoiseModel {
    Iso {
        sigma: f64,
    },
    Full {
        covariance: DMatrix<f64>,
        lower: DMatrix<f64>,
    },
}

impl NoiseModel {
    pub fn iso(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidNoise(format!(
                "standard deviation must be positive so that the covariance is invertible, got {sigma}"
            )));
        }
        Ok(Self::Iso { sigma })
    }

    pub fn full(covariance: DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() {
            return Err(Error::InvalidNoise("covariance must be square".into()));
        }
        let chol = linalg::cholesky(&covariance, "noise covariance").map_err(|_| {
            Error::InvalidNoise("covariance is not symmetric positive definite".into())
        })?;
        Ok(Self::Full {
            lower: chol.l(),
            covariance,
        })
    }

    /// Dimension, if fixed by the model.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Iso { .. } => None,
            Self::Full { covariance, .. } => Some(covariance.nrows()),
        }
    }

    pub fn covariance(&self, m: usize) -> Result<DMatrix<f64>> {
        match self {
            Self::Iso { sigma } => Ok(DMatrix::identity(m, m) * (sigma * sigma)),
            Self::Full { covariance, .. } => {
                ensure_dim(covariance.nrows(), m)?;
                Ok(covariance.clone())
            }
        }
    }

    /// Lower Cholesky factor of `Σ_E`.
    pub fn lower_factor(&self, m: usize) -> Result<DMatrix<f64>> {
        match self {
            Self::Iso { sigma } => Ok(DMatrix::identity(m, m) * *sigma),
            Self::Full { lower, .. } => {
                ensure_dim(lower.nrows(), m)?;
                Ok(lower.clone())
            }
        }
    }

    pub fn draw(&self, m: usize, rng: &mut crate::rng::SeededRng) -> Result<DVector<f64>> {
        let g = rng.normal_vector(m);
        match self {
            Self::Iso { sigma } => Ok(g * *sigma),
            Self::Full { lower, .. } => {
                ensure_dim(lower.nrows(), m)?;
                Ok(lower * g)
            }
        }
    }
}
