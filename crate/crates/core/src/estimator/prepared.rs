use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{ensure_dim, Error, Result};
use crate::linalg;
use crate::model::{ForwardOperator, MixtureModel, NoiseModel};

pub(crate) const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-component quantities reused for every observation.
#[derive(Clone, Debug)]
pub(crate) struct PreparedComponent {
    pub(crate) chol: Cholesky<f64, Dyn>,
    /// `A μ_i`
    pub(crate) a_mean: DVector<f64>,
    /// `Σ_i Aᵀ`, `n × m`
    pub(crate) gain: DMatrix<f64>,
    /// `l_i = log w_i − ½ (n log 2π + log |S_i|)`
    pub(crate) log_const: f64,
}

/// A mixture model bound to an operator and noise model, ready to evaluate
/// `R_θ(y) = Σ_i W_i t_i`.
#[derive(Clone, Debug)]
pub struct PreparedEstimator {
    model: MixtureModel,
    operator: ForwardOperator,
    a: DMatrix<f64>,
    noise: NoiseModel,
    components: Vec<PreparedComponent>,
    kept: Vec<usize>,
}

/// Simplex vector of posterior component probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorWeights(pub DVector<f64>);

impl PosteriorWeights {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Numerically stable softmax. The maximum is subtracted first, so very
/// negative logits do not underflow to an all-zero vector.
pub fn softmax(z: &DVector<f64>) -> DVector<f64> {
    let max = z.max();
    let mut e = z.map(|v| (v - max).exp());
    let total = e.sum();
    e /= total;
    e
}

impl PreparedEstimator {
    /// Factorizes `S_i = AΣ_iAᵀ + Σ_E` for every component with positive
    /// weight. Zero-weight components are dropped.
    pub fn new(
        model: &MixtureModel,
        operator: &ForwardOperator,
        noise: &NoiseModel,
    ) -> Result<Self> {
        let n = model.dim();
        ensure_dim(n, operator.input_dim())?;
        let m = operator.output_dim();
        if let Some(dim) = noise.dim() {
            ensure_dim(m, dim)?;
        }
        let (model, kept) = model.pruned();
        let a = operator.matrix();
        let noise_cov = noise.covariance(m)?;
        let identity = operator.is_identity();
        let components = (0..model.components())
            .map(|i| {
                let sigma = &model.covariances()[i];
                let gain = if identity {
                    sigma.clone()
                } else {
                    sigma * a.transpose()
                };
                let s = if identity {
                    sigma + &noise_cov
                } else {
                    &a * &gain + &noise_cov
                };
                let chol = linalg::cholesky(&s, &format!("S_{i} = AΣAᵀ + Σ_E"))?;
                let log_det = linalg::log_det_from_lower(&chol.l());
                let log_const = model.weights()[i].ln() - 0.5 * (n as f64 * LOG_2PI + log_det);
                if !log_const.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "log constant of component {i} is not finite"
                    )));
                }
                Ok(PreparedComponent {
                    a_mean: &a * &model.means()[i],
                    gain,
                    log_const,
                    chol,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            operator: operator.clone(),
            a,
            noise: noise.clone(),
            components,
            kept,
        })
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    pub fn operator(&self) -> &ForwardOperator {
        &self.operator
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Dense `m × n` forward matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Indices of the original components that survived preparation.
    pub fn kept_components(&self) -> &[usize] {
        &self.kept
    }

    pub fn components(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.a.ncols()
    }

    pub(crate) fn component(&self, i: usize) -> &PreparedComponent {
        &self.components[i]
    }

    /// Lower Cholesky factor `C_i` of `S_i`.
    pub fn cholesky_factor(&self, i: usize) -> DMatrix<f64> {
        self.components[i].chol.l()
    }

    pub fn log_constant(&self, i: usize) -> f64 {
        self.components[i].log_const
    }

    pub fn log_constants(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.components(),
            self.components.iter().map(|c| c.log_const),
        )
    }

    /// `C_i⁻¹ (y − Aμ_i)` by forward substitution.
    fn whitened_residual(&self, y: &DVector<f64>, i: usize) -> DVector<f64> {
        let c = &self.components[i];
        let mut u = y - &c.a_mean;
        c.chol.l_dirty().solve_lower_triangular_mut(&mut u);
        u
    }

    fn check(&self, y: &DVector<f64>) -> Result<()> {
        ensure_dim(self.input_dim(), y.len())
    }

    /// `z_i = l_i − ½‖C_i⁻¹(y − Aμ_i)‖²`.
    pub fn component_logit(&self, y: &DVector<f64>, i: usize) -> Result<f64> {
        self.check(y)?;
        Ok(self.components[i].log_const - 0.5 * self.whitened_residual(y, i).norm_squared())
    }

    pub fn logits(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(y)?;
        Ok(DVector::from_iterator(
            self.components(),
            (0..self.components()).map(|i| {
                self.components[i].log_const - 0.5 * self.whitened_residual(y, i).norm_squared()
            }),
        ))
    }

    pub fn responsibilities(&self, y: &DVector<f64>) -> Result<PosteriorWeights> {
        Ok(PosteriorWeights(softmax(&self.logits(y)?)))
    }

    /// `t_i = μ_i + Σ_iAᵀ S_i⁻¹ (y − Aμ_i)` via two triangular solves.
    pub fn component_mean(&self, y: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        self.check(y)?;
        let (_, t) = self.logit_and_mean(y, i);
        Ok(t)
    }

    fn logit_and_mean(&self, y: &DVector<f64>, i: usize) -> (f64, DVector<f64>) {
        let c = &self.components[i];
        let mut u = self.whitened_residual(y, i);
        let z = c.log_const - 0.5 * u.norm_squared();
        c.chol.l_dirty().tr_solve_lower_triangular_mut(&mut u);
        let t = &self.model.means()[i] + &c.gain * u;
        (z, t)
    }

    /// `R_θ(y)`.
    pub fn estimate(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(y)?;
        let (z, t): (Vec<f64>, Vec<DVector<f64>>) = (0..self.components())
            .map(|i| self.logit_and_mean(y, i))
            .unzip();
        let w = softmax(&DVector::from_vec(z));
        let mut out = DVector::zeros(self.output_dim());
        for (wi, ti) in w.iter().zip(&t) {
            out.axpy(*wi, ti, 1.0);
        }
        Ok(out)
    }

    /// Estimates for every row of `y` (`count × m`), returned row-wise.
    /// Rows are processed in parallel; output order matches input order.
    pub fn estimate_batch(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim(self.input_dim(), y.ncols())?;
        let rows: Vec<DVector<f64>> = (0..y.nrows())
            .into_par_iter()
            .map(|j| self.estimate(&linalg::row_vector(y, j)))
            .collect::<Result<_>>()?;
        Ok(linalg::rows_to_matrix(&rows, self.output_dim()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn scalar_setup(sigma: f64, noise: f64) -> PreparedEstimator {
        let model = MixtureModel::new(
            DVector::from_vec(vec![1.0]),
            vec![DVector::zeros(1)],
            vec![DMatrix::from_element(1, 1, sigma)],
        )
        .unwrap();
        PreparedEstimator::new(
            &model,
            &ForwardOperator::identity(1),
            &NoiseModel::iso(noise).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_algebra_for_point_masses() {
        let model = MixtureModel::new(
            DVector::from_vec(vec![0.5, 0.5]),
            vec![DVector::zeros(2), DVector::from_vec(vec![1.0, 1.0])],
            vec![DMatrix::zeros(2, 2); 2],
        )
        .unwrap();
        let prep = PreparedEstimator::new(
            &model,
            &ForwardOperator::identity(2),
            &NoiseModel::iso(1.0).unwrap(),
        )
        .unwrap();
        for i in 0..2 {
            assert_eq!(prep.cholesky_factor(i), DMatrix::identity(2, 2));
            let expected = 0.5f64.ln() - LOG_2PI;
            assert!((prep.log_constant(i) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_weight_components_are_dropped() {
        let model = MixtureModel::new(
            DVector::from_vec(vec![1.0, 0.0]),
            vec![DVector::zeros(1); 2],
            vec![DMatrix::identity(1, 1); 2],
        )
        .unwrap();
        let prep = PreparedEstimator::new(
            &model,
            &ForwardOperator::identity(1),
            &NoiseModel::iso(1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(prep.components(), 1);
        assert_eq!(prep.kept_components(), &[0]);
    }

    #[test]
    fn scalar_logit_is_gaussian_log_density() {
        let prep = scalar_setup(0.0, 1.0);
        for y in [-2.0, 0.0, 0.7] {
            let z = prep
                .component_logit(&DVector::from_element(1, y), 0)
                .unwrap();
            let expected = (1.0 / (2.0 * std::f64::consts::PI).sqrt()).ln() - y * y / 2.0;
            assert!((z - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_gain_is_one_half() {
        let prep = scalar_setup(1.0, 1.0);
        let t = prep
            .component_mean(&DVector::from_element(1, 3.0), 0)
            .unwrap();
        assert!((t[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_handles_extreme_logits() {
        let w = softmax(&DVector::from_vec(vec![-1e5, -1e5 - 3f64.ln()]));
        assert!((w[0] - 0.75).abs() < 1e-10);
        let w = softmax(&DVector::from_vec(vec![0.0, 3f64.ln()]));
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn refactorization_matches_s() {
        let mut rng = SeededRng::new(2);
        let n = 4;
        let b = DMatrix::from_fn(n, 2, |_, _| rng.normal());
        let a = DMatrix::from_fn(3, n, |_, _| rng.normal());
        let g = DMatrix::from_fn(3, 3, |_, _| rng.normal());
        let noise_cov = &g * g.transpose() + DMatrix::identity(3, 3);
        let model = MixtureModel::from_factors(
            DVector::from_vec(vec![1.0]),
            vec![DVector::zeros(n)],
            vec![b.clone()],
        )
        .unwrap();
        let prep = PreparedEstimator::new(
            &model,
            &ForwardOperator::dense(a.clone()),
            &NoiseModel::full(noise_cov.clone()).unwrap(),
        )
        .unwrap();
        let s = &a * model.covariances()[0].clone() * a.transpose() + noise_cov;
        let c = prep.cholesky_factor(0);
        assert!((&c * c.transpose() - &s).norm() / s.norm() < 1e-10);
    }

    #[test]
    fn batch_matches_single_estimates() {
        let mut rng = SeededRng::new(9);
        let model = MixtureModel::new(
            DVector::from_vec(vec![0.4, 0.6]),
            vec![
                DVector::from_vec(vec![1.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, -1.0, 0.5]),
            ],
            vec![
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 0.0])),
                DMatrix::identity(3, 3) * 0.3,
            ],
        )
        .unwrap();
        let prep = PreparedEstimator::new(
            &model,
            &ForwardOperator::identity(3),
            &NoiseModel::iso(0.2).unwrap(),
        )
        .unwrap();
        let y = DMatrix::from_fn(7, 3, |_, _| rng.normal());
        let batch = prep.estimate_batch(&y).unwrap();
        for j in 0..7 {
            let single = prep.estimate(&linalg::row_vector(&y, j)).unwrap();
            assert_eq!(batch.row(j).transpose(), single);
        }
    }
}
