//! Empirical risk of `R_θ` and its analytic gradient.
//!
//! Observations are whitened by the noise factor, `ỹ = C_E⁻¹y` and
//! `Ã = C_E⁻¹A`. The posterior mean is unchanged and the whitened
//! `S̃_i = I + P_iP_iᵀ` with `P_i = ÃB_i` is handled through the `r × r`
//! matrix `G_i = I + P_iᵀP_i`:
//!
//! `S̃⁻¹ = I − P G⁻¹ Pᵀ`, `log|S̃| = log|G|`, `S̃⁻¹P = P G⁻¹`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::TrainableParams;
use crate::error::{ensure_dim, Error, Result};
use crate::estimator::softmax;
use crate::model::{ForwardOperator, NoiseModel};

/// Penalty on the covariances added to the empirical risk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    #[default]
    None,
    /// `Σ_i ‖Σ_i‖_*`
    Nuclear,
    /// `Σ_i ‖Σ_i‖_F²`
    Frobenius,
}

/// `C_E⁻¹A`, kept as a scalar when it is a multiple of the identity.
#[derive(Clone, Debug)]
pub(crate) enum WhitenedOperator {
    Scaled { n: usize, scale: f64 },
    Dense(DMatrix<f64>),
}

impl WhitenedOperator {
    pub(crate) fn new(operator: &ForwardOperator, noise: &NoiseModel) -> Result<Self> {
        let m = operator.output_dim();
        if let Some(dim) = noise.dim() {
            ensure_dim(m, dim)?;
        }
        Ok(match (operator.is_identity(), noise) {
            (true, NoiseModel::Iso { sigma }) => Self::Scaled {
                n: m,
                scale: 1.0 / sigma,
            },
            _ => {
                let lower = noise.lower_factor(m)?;
                let a = operator.matrix();
                Self::Dense(
                    lower
                        .solve_lower_triangular(&a)
                        .ok_or(Error::InvalidNoise("singular noise factor".into()))?,
                )
            }
        })
    }

    pub(crate) fn whiten_observations(
        &self,
        operator_noise: &NoiseModel,
        y: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        // rows of y are observations; solve C_E Ỹᵀ = Yᵀ
        match operator_noise {
            NoiseModel::Iso { sigma } => Ok(y / *sigma),
            NoiseModel::Full { lower, .. } => {
                ensure_dim(lower.nrows(), y.ncols())?;
                let t = lower
                    .solve_lower_triangular(&y.transpose())
                    .ok_or(Error::InvalidNoise("singular noise factor".into()))?;
                Ok(t.transpose())
            }
        }
    }

    fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Scaled { scale, .. } => x * *scale,
            Self::Dense(a) => a * x,
        }
    }

    fn apply_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Scaled { scale, .. } => b * *scale,
            Self::Dense(a) => a * b,
        }
    }

    fn adjoint_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Scaled { scale, .. } => v * *scale,
            Self::Dense(a) => a.tr_mul(v),
        }
    }

    fn adjoint_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Scaled { scale, .. } => m * *scale,
            Self::Dense(a) => a.tr_mul(m),
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            Self::Scaled { n, .. } => *n,
            Self::Dense(a) => a.nrows(),
        }
    }
}

/// Per-component quantities shared by all samples of a batch.
struct ComponentCache {
    p: DMatrix<f64>,
    g_chol: Cholesky<f64, Dyn>,
    a_mean: DVector<f64>,
    log_const: f64,
}

/// Forward quantities of one sample and component.
struct SampleComponent {
    v: DVector<f64>,
    ptv: DVector<f64>,
    z: f64,
    t: DVector<f64>,
}

/// Sums over a chunk of samples; combined in a fixed order.
struct Accum {
    risk: f64,
    d_logit_z: DVector<f64>,
    sum_h: Vec<DVector<f64>>,
    mean_m: Vec<DVector<f64>>,
    factor_n: Vec<DMatrix<f64>>,
    factor_m: Vec<DMatrix<f64>>,
}

impl Accum {
    fn zeros(l: usize, n: usize, m: usize, r: usize) -> Self {
        Self {
            risk: 0.0,
            d_logit_z: DVector::zeros(l),
            sum_h: vec![DVector::zeros(n); l],
            mean_m: vec![DVector::zeros(m); l],
            factor_n: vec![DMatrix::zeros(n, r); l],
            factor_m: vec![DMatrix::zeros(m, r); l],
        }
    }

    fn add(&mut self, other: &Self) {
        self.risk += other.risk;
        self.d_logit_z += &other.d_logit_z;
        for i in 0..self.sum_h.len() {
            self.sum_h[i] += &other.sum_h[i];
            self.mean_m[i] += &other.mean_m[i];
            self.factor_n[i] += &other.factor_n[i];
            self.factor_m[i] += &other.factor_m[i];
        }
    }
}

/// Fixed chunk size so the reduction order does not depend on the thread count.
const CHUNK: usize = 16;

/// Differentiable evaluation of `R_θ` on whitened data.
pub struct Objective {
    op: WhitenedOperator,
    noise: NoiseModel,
    n: usize,
}

impl Objective {
    pub fn new(operator: &ForwardOperator, noise: &NoiseModel) -> Result<Self> {
        Ok(Self {
            op: WhitenedOperator::new(operator, noise)?,
            noise: noise.clone(),
            n: operator.input_dim(),
        })
    }

    /// Whitened observations `C_E⁻¹ y`, row-wise.
    pub fn whiten(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim(self.op.output_dim(), y.ncols())?;
        self.op.whiten_observations(&self.noise, y)
    }

    fn cache(&self, params: &TrainableParams) -> Result<Vec<ComponentCache>> {
        ensure_dim(self.n, params.dim())?;
        let weights = params.weights();
        (0..params.components())
            .map(|i| {
                let p = self.op.apply_mat(&params.factors[i]);
                let r = p.ncols();
                let g = DMatrix::identity(r, r) + p.tr_mul(&p);
                let g_chol = Cholesky::new(g).ok_or_else(|| {
                    Error::NotPositiveDefinite(format!("I + PᵀP for component {i}"))
                })?;
                let log_det = crate::linalg::log_det_from_lower(&g_chol.l());
                let log_const =
                    weights[i].ln() - 0.5 * (self.n as f64 * crate::estimator::LOG_2PI + log_det);
                Ok(ComponentCache {
                    a_mean: self.op.apply_vec(&params.means[i]),
                    p,
                    g_chol,
                    log_const,
                })
            })
            .collect()
    }

    fn forward_one(
        &self,
        params: &TrainableParams,
        cache: &[ComponentCache],
        y: &DVector<f64>,
    ) -> Vec<SampleComponent> {
        cache
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let r = y - &c.a_mean;
                let ptr = c.p.tr_mul(&r);
                let ptv = c.g_chol.solve(&ptr);
                let v = &r - &c.p * &ptv;
                let z = c.log_const - 0.5 * r.dot(&v);
                let t = &params.means[i] + &params.factors[i] * &ptv;
                SampleComponent { v, ptv, z, t }
            })
            .collect()
    }

    fn mix(parts: &[SampleComponent]) -> (DVector<f64>, DVector<f64>) {
        let w = softmax(&DVector::from_iterator(
            parts.len(),
            parts.iter().map(|p| p.z),
        ));
        let mut out = DVector::zeros(parts[0].t.len());
        for (wi, p) in w.iter().zip(parts) {
            out.axpy(*wi, &p.t, 1.0);
        }
        (w, out)
    }

    /// `R_θ` on already whitened observations (rows).
    pub fn estimate_whitened(
        &self,
        params: &TrainableParams,
        y_white: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        let cache = self.cache(params)?;
        let rows: Vec<DVector<f64>> = (0..y_white.nrows())
            .into_par_iter()
            .map(|j| Self::mix(&self.forward_one(params, &cache, &y_white.row(j).transpose())).1)
            .collect();
        Ok(crate::linalg::rows_to_matrix(&rows, self.n))
    }

    /// `(1/N) Σ_j ‖x_j − R_θ(y_j)‖²` on whitened observations.
    pub fn risk(
        &self,
        params: &TrainableParams,
        x: &DMatrix<f64>,
        y_white: &DMatrix<f64>,
    ) -> Result<f64> {
        check_batch(x, y_white)?;
        let est = self.estimate_whitened(params, y_white)?;
        let mut total = 0.0;
        for j in 0..x.nrows() {
            total += (x.row(j) - est.row(j)).norm_squared();
        }
        Ok(total / x.nrows() as f64)
    }

    /// Risk and its gradient (no regularizer).
    pub fn risk_and_grad(
        &self,
        params: &TrainableParams,
        x: &DMatrix<f64>,
        y_white: &DMatrix<f64>,
    ) -> Result<(f64, TrainableParams)> {
        check_batch(x, y_white)?;
        let cache = self.cache(params)?;
        let (l, n, r) = (params.components(), params.dim(), params.rank());
        let m = self.op.output_dim();
        let count = x.nrows();
        let scale = 2.0 / count as f64;
        let starts: Vec<usize> = (0..count).step_by(CHUNK).collect();
        let partials: Vec<Accum> = starts
            .par_iter()
            .map(|&start| {
                let mut acc = Accum::zeros(l, n, m, r);
                for j in start..(start + CHUNK).min(count) {
                    let y = y_white.row(j).transpose();
                    let parts = self.forward_one(params, &cache, &y);
                    let (w, est) = Self::mix(&parts);
                    let e = &est - x.row(j).transpose();
                    acc.risk += e.norm_squared();
                    let g = e * scale;
                    for (i, (part, c)) in parts.iter().zip(&cache).enumerate() {
                        let a = w[i] * g.dot(&(&part.t - &est));
                        let h = &g * w[i];
                        let bth = params.factors[i].tr_mul(&h);
                        let g_inv_bth = c.g_chol.solve(&bth);
                        let q = &c.p * &g_inv_bth;
                        let ptq = &bth - &g_inv_bth;
                        acc.d_logit_z[i] += a;
                        acc.sum_h[i] += &h;
                        let av_minus_q = &part.v * a - &q;
                        acc.mean_m[i] += &av_minus_q;
                        acc.factor_n[i].ger(1.0, &h, &part.ptv, 1.0);
                        acc.factor_m[i].ger(1.0, &av_minus_q, &part.ptv, 1.0);
                        acc.factor_m[i].ger(-1.0, &part.v, &ptq, 1.0);
                        acc.factor_m[i].ger(1.0, &part.v, &bth, 1.0);
                    }
                }
                acc
            })
            .collect();
        let mut total = Accum::zeros(l, n, m, r);
        for p in &partials {
            total.add(p);
        }

        let weights = params.weights();
        let sum_a = total.d_logit_z.sum();
        let logits = DVector::from_fn(l, |k, _| total.d_logit_z[k] - weights[k] * sum_a);
        let mut means = Vec::with_capacity(l);
        let mut factors = Vec::with_capacity(l);
        for (i, c) in cache.iter().enumerate() {
            means.push(&total.sum_h[i] + self.op.adjoint_vec(&total.mean_m[i]));
            // S̃⁻¹P = P G⁻¹
            let s_inv_p = c.g_chol.solve(&c.p.transpose()).transpose();
            let inner = &total.factor_m[i] - s_inv_p * total.d_logit_z[i];
            factors.push(&total.factor_n[i] + self.op.adjoint_mat(&inner));
        }
        Ok((
            total.risk / count as f64,
            TrainableParams {
                logits,
                means,
                factors,
            },
        ))
    }
}

fn check_batch(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("batch is empty".into()));
    }
    ensure_dim(x.nrows(), y.nrows())
}

/// Value of the covariance penalty.
pub fn regularizer(params: &TrainableParams, kind: RegularizerKind) -> f64 {
    match kind {
        RegularizerKind::None => 0.0,
        // Σ_i is PSD, so its nuclear norm is its trace, i.e. ‖B_i‖_F²
        RegularizerKind::Nuclear => params.factors.iter().map(|b| b.norm_squared()).sum(),
        RegularizerKind::Frobenius => params
            .factors
            .iter()
            .map(|b| {
                let g = b.tr_mul(b);
                g.norm_squared()
            })
            .sum(),
    }
}

/// Gradient of [`regularizer`] with respect to the factors.
///
/// For the nuclear norm the subgradient `VVᵀ` (identity on the range of
/// `Σ_i`) is used; through `Σ = BBᵀ` it becomes `2VVᵀB = 2B`.
pub fn regularizer_grad(params: &TrainableParams, kind: RegularizerKind) -> Vec<DMatrix<f64>> {
    params
        .factors
        .iter()
        .map(|b| match kind {
            RegularizerKind::None => DMatrix::zeros(b.nrows(), b.ncols()),
            RegularizerKind::Nuclear => b * 2.0,
            RegularizerKind::Frobenius => b * b.tr_mul(b) * 4.0,
        })
        .collect()
}

/// `(1/N) Σ_j ‖x_j − R_θ(y_j)‖²` for raw observations.
pub fn empirical_risk(
    params: &TrainableParams,
    operator: &ForwardOperator,
    noise: &NoiseModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<f64> {
    let obj = Objective::new(operator, noise)?;
    obj.risk(params, x, &obj.whiten(y)?)
}

/// Gradient of `empirical_risk + reg_lambda · regularizer`.
pub fn grad(
    params: &TrainableParams,
    operator: &ForwardOperator,
    noise: &NoiseModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    kind: RegularizerKind,
    reg_lambda: f64,
) -> Result<TrainableParams> {
    let obj = Objective::new(operator, noise)?;
    let (_, mut g) = obj.risk_and_grad(params, x, &obj.whiten(y)?)?;
    if reg_lambda != 0.0 {
        for (gb, rb) in g.factors.iter_mut().zip(regularizer_grad(params, kind)) {
            *gb += rb * reg_lambda;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::PreparedEstimator;
    use crate::rng::SeededRng;

    fn random_params(rng: &mut SeededRng, l: usize, n: usize, r: usize) -> TrainableParams {
        TrainableParams::new(
            DVector::from_fn(l, |_, _| 0.5 * rng.normal()),
            (0..l).map(|_| rng.normal_vector(n)).collect(),
            (0..l)
                .map(|_| DMatrix::from_fn(n, r, |_, _| 0.7 * rng.normal()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn risk_matches_prepared_estimator() {
        let mut rng = SeededRng::new(31);
        let (n, m) = (4, 3);
        let params = random_params(&mut rng, 3, n, 2);
        let a = DMatrix::from_fn(m, n, |_, _| rng.normal());
        let g = DMatrix::from_fn(m, m, |_, _| 0.3 * rng.normal());
        let noise = NoiseModel::full(&g * g.transpose() + DMatrix::identity(m, m) * 0.2).unwrap();
        let op = ForwardOperator::dense(a);
        let x = DMatrix::from_fn(9, n, |_, _| rng.normal());
        let y = DMatrix::from_fn(9, m, |_, _| rng.normal());
        let risk = empirical_risk(&params, &op, &noise, &x, &y).unwrap();
        let prep = PreparedEstimator::new(&params.to_model().unwrap(), &op, &noise).unwrap();
        let est = prep.estimate_batch(&y).unwrap();
        let expected = (0..9)
            .map(|j| (x.row(j) - est.row(j)).norm_squared())
            .sum::<f64>()
            / 9.0;
        assert!((risk - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    #[test]
    fn perfect_point_mass_has_zero_risk() {
        let x = DMatrix::from_row_slice(1, 2, &[1.5, -0.5]);
        let params = TrainableParams::new(
            DVector::from_element(1, 0.0),
            vec![x.row(0).transpose()],
            vec![DMatrix::zeros(2, 1)],
        )
        .unwrap();
        let y = DMatrix::from_row_slice(1, 2, &[3.0, 1.0]);
        let risk = empirical_risk(
            &params,
            &ForwardOperator::identity(2),
            &NoiseModel::iso(1.0).unwrap(),
            &x,
            &y,
        )
        .unwrap();
        assert_eq!(risk, 0.0);
    }

    #[test]
    fn identical_components_have_zero_logit_gradient() {
        let mut rng = SeededRng::new(4);
        let b = DMatrix::from_fn(3, 2, |_, _| rng.normal());
        let mu = rng.normal_vector(3);
        let params = TrainableParams::new(DVector::zeros(3), vec![mu; 3], vec![b; 3]).unwrap();
        let x = DMatrix::from_fn(5, 3, |_, _| rng.normal());
        let y = DMatrix::from_fn(5, 3, |_, _| rng.normal());
        let g = grad(
            &params,
            &ForwardOperator::identity(3),
            &NoiseModel::iso(0.5).unwrap(),
            &x,
            &y,
            RegularizerKind::None,
            0.0,
        )
        .unwrap();
        assert!(g.logits.amax() < 1e-14);
    }

    #[test]
    fn duplicated_batch_leaves_gradient_unchanged() {
        let mut rng = SeededRng::new(5);
        let params = random_params(&mut rng, 2, 3, 2);
        let x = DMatrix::from_fn(4, 3, |_, _| rng.normal());
        let y = DMatrix::from_fn(4, 3, |_, _| rng.normal());
        let x2 = DMatrix::from_fn(8, 3, |j, k| x[(j % 4, k)]);
        let y2 = DMatrix::from_fn(8, 3, |j, k| y[(j % 4, k)]);
        let op = ForwardOperator::identity(3);
        let noise = NoiseModel::iso(0.4).unwrap();
        let g1 = grad(&params, &op, &noise, &x, &y, RegularizerKind::None, 0.0)
            .unwrap()
            .flatten();
        let g2 = grad(&params, &op, &noise, &x2, &y2, RegularizerKind::None, 0.0)
            .unwrap()
            .flatten();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        let r1 = empirical_risk(&params, &op, &noise, &x, &y).unwrap();
        let r2 = empirical_risk(&params, &op, &noise, &x2, &y2).unwrap();
        assert!((r1 - r2).abs() < 1e-14 * r1.max(1.0));
    }

    #[test]
    fn regularizer_values() {
        let n = 4;
        let eye = TrainableParams::new(
            DVector::zeros(1),
            vec![DVector::zeros(n)],
            vec![DMatrix::identity(n, n)],
        )
        .unwrap();
        assert_eq!(regularizer(&eye, RegularizerKind::Nuclear), n as f64);
        assert_eq!(regularizer(&eye, RegularizerKind::Frobenius), n as f64);
        let zero = TrainableParams::new(
            DVector::zeros(1),
            vec![DVector::zeros(n)],
            vec![DMatrix::zeros(n, 2)],
        )
        .unwrap();
        assert_eq!(regularizer(&zero, RegularizerKind::Nuclear), 0.0);
        assert_eq!(regularizer(&zero, RegularizerKind::Frobenius), 0.0);
        assert_eq!(regularizer(&zero, RegularizerKind::None), 0.0);
    }

    #[test]
    fn nuclear_value_matches_singular_values() {
        let mut rng = SeededRng::new(8);
        let b = DMatrix::from_fn(5, 3, |_, _| rng.normal());
        let p = TrainableParams::new(DVector::zeros(1), vec![DVector::zeros(5)], vec![b.clone()])
            .unwrap();
        let sv: f64 = b
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .map(|s| s * s)
            .sum();
        assert!((regularizer(&p, RegularizerKind::Nuclear) - sv).abs() < 1e-10);
        let sigma = &b * b.transpose();
        assert!(
            (regularizer(&p, RegularizerKind::Frobenius) - sigma.norm_squared()).abs()
                < 1e-10 * sigma.norm_squared()
        );
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = SeededRng::new(12);
        let (n, m) = (3, 3);
        let params = random_params(&mut rng, 2, n, 2);
        let op = ForwardOperator::dense(DMatrix::from_fn(m, n, |_, _| rng.normal()));
        let noise = NoiseModel::iso(0.6).unwrap();
        let x = DMatrix::from_fn(6, n, |_, _| rng.normal());
        let y = DMatrix::from_fn(6, m, |_, _| rng.normal());
        for kind in [
            RegularizerKind::None,
            RegularizerKind::Frobenius,
            RegularizerKind::Nuclear,
        ] {
            let lam = if kind == RegularizerKind::None {
                0.0
            } else {
                0.3
            };
            let f = |p: &TrainableParams| {
                empirical_risk(p, &op, &noise, &x, &y).unwrap() + lam * regularizer(p, kind)
            };
            let g = grad(&params, &op, &noise, &x, &y, kind, lam)
                .unwrap()
                .flatten();
            let flat = params.flatten();
            for k in 0..flat.len() {
                let h = 1e-5 * (1.0 + flat[k].abs());
                let mut plus = flat.clone();
                plus[k] += h;
                let mut minus = flat.clone();
                minus[k] -= h;
                let fd = (f(&params.unflatten(&plus)) - f(&params.unflatten(&minus))) / (2.0 * h);
                if fd.abs() < 1e-8 && g[k].abs() < 1e-8 {
                    continue;
                }
                assert!(
                    (fd - g[k]).abs() <= 1e-4 * fd.abs().max(g[k].abs()),
                    "{kind:?} coordinate {k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }
}
