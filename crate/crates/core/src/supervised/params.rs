use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::softmax;
use crate::linalg;
use crate::model::MixtureModel;

/// Unconstrained parametrization of a mixture: weight logits `α`
/// (`w = softmax(α)`), means, and factors `B_i` with `Σ_i = B_iB_iᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainableParams {
    pub logits: DVector<f64>,
    pub means: Vec<DVector<f64>>,
    pub factors: Vec<DMatrix<f64>>,
}

impl TrainableParams {
    pub fn new(
        logits: DVector<f64>,
        means: Vec<DVector<f64>>,
        factors: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let l = logits.len();
        if l == 0 || means.len() != l || factors.len() != l {
            return Err(Error::InvalidModel(format!(
                "{l} logits, {} means, {} factors",
                means.len(),
                factors.len()
            )));
        }
        let n = means[0].len();
        let r = factors[0].ncols();
        if means.iter().any(|m| m.len() != n)
            || factors.iter().any(|b| b.nrows() != n || b.ncols() != r)
        {
            return Err(Error::InvalidModel(
                "means and factors must share n and r".into(),
            ));
        }
        Ok(Self {
            logits,
            means,
            factors,
        })
    }

    /// Truncates each covariance to its top `rank` eigenpairs.
    pub fn from_model(model: &MixtureModel, rank: usize) -> Self {
        let n = model.dim();
        let rank = rank.min(n);
        let factors = model
            .covariances()
            .iter()
            .map(|cov| {
                let eig = linalg::sorted_eigen(cov);
                DMatrix::from_fn(n, rank, |i, k| {
                    eig.vectors[(i, k)] * eig.values[k].max(0.0).sqrt()
                })
            })
            .collect();
        // zero weights would give −∞ logits; floor them far below the rest
        let logits = model
            .weights()
            .map(|w| if w > 0.0 { w.ln() } else { -50.0 });
        Self {
            logits,
            means: model.means().to_vec(),
            factors,
        }
    }

    pub fn components(&self) -> usize {
        self.logits.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn weights(&self) -> DVector<f64> {
        softmax(&self.logits)
    }

    pub fn to_model(&self) -> Result<MixtureModel> {
        MixtureModel::from_factors(self.weights(), self.means.clone(), self.factors.clone())
    }

    pub fn len(&self) -> usize {
        let (l, n, r) = (self.components(), self.dim(), self.rank());
        l + l * n + l * n * r
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Logits, then means, then factors (column-major).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend(self.logits.iter());
        for m in &self.means {
            out.extend(m.iter());
        }
        for b in &self.factors {
            out.extend(b.as_slice());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten) with the shape of `self`.
    pub fn unflatten(&self, values: &[f64]) -> Self {
        assert_eq!(
            values.len(),
            self.len(),
            "flat parameter vector has the wrong length"
        );
        let (l, n, r) = (self.components(), self.dim(), self.rank());
        let mut it = values.iter().copied();
        let logits = DVector::from_iterator(l, it.by_ref().take(l));
        let means = (0..l)
            .map(|_| DVector::from_iterator(n, it.by_ref().take(n)))
            .collect();
        let factors = (0..l)
            .map(|_| DMatrix::from_iterator(n, r, it.by_ref().take(n * r)))
            .collect();
        Self {
            logits,
            means,
            factors,
        }
    }

    /// Zero parameters of the same shape.
    pub fn zeros_like(&self) -> Self {
        let (n, r) = (self.dim(), self.rank());
        Self {
            logits: DVector::zeros(self.components()),
            means: vec![DVector::zeros(n); self.components()],
            factors: vec![DMatrix::zeros(n, r); self.components()],
        }
    }

    /// Coordinate clipping to `‖θ‖_∞ ≤ bound`.
    pub fn clamp(&mut self, bound: f64) {
        let clip = |v: &mut f64| *v = v.clamp(-bound, bound);
        self.logits.iter_mut().for_each(clip);
        for m in &mut self.means {
            m.iter_mut().for_each(clip);
        }
        for b in &mut self.factors {
            b.iter_mut().for_each(clip);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}
