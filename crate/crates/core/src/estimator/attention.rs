use nalgebra::{DMatrix, DVector};

use super::prepared::{softmax, PreparedEstimator};
use crate::error::Result;
use crate::linalg;

/// Queries, keys and values of the attention form of `R_θ`.
///
/// The constant part of `Q_i` and `K_i` is `√(l_i + δ)/√m` with a common
/// shift `δ = max(0, −min_i l_i)`. Row sums of `Q ⊙ K` then equal `z_i + δ`,
/// which leaves the softmax unchanged.
#[derive(Clone, Debug)]
pub struct AttentionTensors {
    /// Rows `η_i = y − Aμ_i`.
    pub eta: DMatrix<f64>,
    pub queries: DMatrix<f64>,
    pub keys: DMatrix<f64>,
    pub values: DMatrix<f64>,
    /// The shift `δ` added to every `l_i`.
    pub logit_offset: f64,
}

impl AttentionTensors {
    /// `(Q ⊙ K) 1_m`.
    pub fn scores(&self) -> DVector<f64> {
        let prod = self.queries.component_mul(&self.keys);
        DVector::from_iterator(prod.nrows(), prod.row_iter().map(|r| r.sum()))
    }

    /// `softmax((Q ⊙ K) 1_m)ᵀ V`.
    pub fn output(&self) -> DVector<f64> {
        self.values.transpose() * softmax(&self.scores())
    }
}

/// `M_i = S_i^{-1/2}` from a symmetric eigendecomposition.
pub fn whitening_matrix(prep: &PreparedEstimator, i: usize) -> DMatrix<f64> {
    let c = prep.cholesky_factor(i);
    linalg::inverse_sqrt_spd(&(&c * c.transpose()), 1e-12)
}

pub fn build_attention(prep: &PreparedEstimator, y: &DVector<f64>) -> Result<AttentionTensors> {
    crate::error::ensure_dim(prep.input_dim(), y.len())?;
    let (l, m, n) = (prep.components(), prep.input_dim(), prep.output_dim());
    let logs = prep.log_constants();
    let offset = (-logs.min()).max(0.0);
    let mut eta = DMatrix::zeros(l, m);
    let mut queries = DMatrix::zeros(l, m);
    let mut keys = DMatrix::zeros(l, m);
    let mut values = DMatrix::zeros(l, n);
    for i in 0..l {
        let comp = prep.component(i);
        let e = y - &comp.a_mean;
        let mi = whitening_matrix(prep, i);
        let half = (&mi * &e) * std::f64::consts::FRAC_1_SQRT_2;
        let constant = (logs[i] + offset).max(0.0).sqrt() / (m as f64).sqrt();
        let v = &prep.model().means()[i] + &comp.gain * (&mi * (&mi * &e));
        eta.set_row(i, &e.transpose());
        queries.set_row(i, &half.map(|a| constant + a).transpose());
        keys.set_row(i, &half.map(|a| constant - a).transpose());
        values.set_row(i, &v.transpose());
    }
    Ok(AttentionTensors {
        eta,
        queries,
        keys,
        values,
        logit_offset: offset,
    })
}

pub fn estimate_attention(prep: &PreparedEstimator, y: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(build_attention(prep, y)?.output())
}
