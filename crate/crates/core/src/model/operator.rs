use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Circular convolution with a truncated, renormalized Gaussian kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBlur {
    n: usize,
    sigma: f64,
    radius: usize,
    taps: Vec<f64>,
}

impl GaussianBlur {
    /// `radius = None` picks `ceil(4σ)` clamped to `⌊n/2⌋ − 1`.
    pub fn new(n: usize, sigma: f64, radius: Option<usize>) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidArgument(format!(
                "blur needs n >= 4, got {n}"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "blur width must be positive, got {sigma}"
            )));
        }
        let max_radius = n / 2 - 1;
        let radius = match radius {
            Some(r) if r > max_radius => {
                return Err(Error::InvalidArgument(format!(
                    "blur radius {r} exceeds {max_radius} for n = {n}"
                )))
            }
            Some(r) => r,
            None => ((4.0 * sigma).ceil() as usize).min(max_radius),
        };
        let mut taps: Vec<f64> = (0..=2 * radius)
            .map(|j| {
                let k = j as f64 - radius as f64;
                (-k * k / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = taps.iter().sum();
        for t in &mut taps {
            *t /= total;
        }
        Ok(Self {
            n,
            sigma,
            radius,
            taps,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Tap `q[k]` for `k ∈ [−radius, radius]`.
    pub fn tap(&self, k: isize) -> f64 {
        let r = self.radius as isize;
        if k.abs() > r {
            0.0
        } else {
            self.taps[(k + r) as usize]
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n as isize;
        let r = self.radius as isize;
        DVector::from_fn(self.n, |i, _| {
            let i = i as isize;
            (-r..=r)
                .map(|k| self.tap(k) * x[(i - k).rem_euclid(n) as usize])
                .sum()
        })
    }

    pub fn materialize(&self) -> DMatrix<f64> {
        let n = self.n as isize;
        let r = self.radius as isize;
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..n {
            for k in -r..=r {
                let j = (i - k).rem_euclid(n) as usize;
                a[(i as usize, j)] += self.tap(k);
            }
        }
        a
    }
}

/// The forward map `A` of `y = Ax + ε`.
#[derive(Clone, Debug, PartialEq)]
pub enum ForwardOperator {
    Dense(DMatrix<f64>),
    GaussianBlur(GaussianBlur),
}

impl ForwardOperator {
    pub fn identity(n: usize) -> Self {
        Self::Dense(DMatrix::identity(n, n))
    }

    pub fn dense(a: DMatrix<f64>) -> Self {
        Self::Dense(a)
    }

    pub fn gaussian_blur(n: usize, sigma: f64) -> Result<Self> {
        Ok(Self::GaussianBlur(GaussianBlur::new(n, sigma, None)?))
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Self::Dense(a) => a.ncols(),
            Self::GaussianBlur(b) => b.n,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Dense(a) => a.nrows(),
            Self::GaussianBlur(b) => b.n,
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(self.input_dim(), x.len())?;
        Ok(match self {
            Self::Dense(a) => a * x,
            Self::GaussianBlur(b) => b.apply(x),
        })
    }

    /// Dense `m × n` matrix of the operator.
    pub fn matrix(&self) -> DMatrix<f64> {
        match self {
            Self::Dense(a) => a.clone(),
            Self::GaussianBlur(b) => b.materialize(),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Self::Dense(a) => a.is_square() && a.is_identity(0.0),
            Self::GaussianBlur(_) => false,
        }
    }
}
