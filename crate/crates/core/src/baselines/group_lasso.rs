use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::GroupBases;
use super::solver::{
    as_row, proximal_gradient_synthesis, resolve_step, SolverConfig, SolverReport,
};
use crate::error::{ensure_dim, Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupLassoMode {
    #[default]
    ProxGrad,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupLassoConfig {
    pub mode: GroupLassoMode,
    pub solver: SolverConfig,
    pub adam_lr: f64,
    pub adam_iters: usize,
    /// `ε` of the smoothed norm `√(βᵀKβ + ε²)`.
    pub smoothing: f64,
}

impl Default for GroupLassoConfig {
    fn default() -> Self {
        Self {
            mode: GroupLassoMode::ProxGrad,
            solver: SolverConfig::default(),
            adam_lr: 1e-2,
            adam_iters: 5000,
            smoothing: 1e-8,
        }
    }
}

/// `‖β‖_K = ‖Fβ‖₂` with `F = K^{1/2} = V diag(f) Vᵀ`.
#[derive(Clone, Debug)]
pub(crate) struct WeightedNorm {
    /// `None` when `K` is diagonal.
    rotation: Option<DMatrix<f64>>,
    f: DVector<f64>,
}

impl WeightedNorm {
    pub(crate) fn new(k: &DMatrix<f64>) -> Self {
        let off_diagonal =
            (0..k.nrows()).any(|i| (0..k.ncols()).any(|j| i != j && k[(i, j)] != 0.0));
        if off_diagonal {
            let eig = linalg::sorted_eigen(k);
            Self {
                f: eig.values.map(|v| v.max(0.0).sqrt()),
                rotation: Some(eig.vectors),
            }
        } else {
            Self {
                rotation: None,
                f: k.diagonal().map(|v| v.max(0.0).sqrt()),
            }
        }
    }

    fn to_rotated(&self, beta: &[f64]) -> DVector<f64> {
        let b = DVector::from_column_slice(beta);
        match &self.rotation {
            Some(v) => v.tr_mul(&b),
            None => b,
        }
    }

    fn unrotate(&self, gamma: DVector<f64>, out: &mut [f64]) {
        let b = match &self.rotation {
            Some(v) => v * gamma,
            None => gamma,
        };
        out.copy_from_slice(b.as_slice());
    }

    pub(crate) fn norm(&self, beta: &[f64]) -> f64 {
        self.to_rotated(beta).component_mul(&self.f).norm()
    }

    /// `Kβ`.
    fn apply_k(&self, beta: &[f64], out: &mut [f64]) {
        let g = self.to_rotated(beta).component_mul(&self.f.map(|f| f * f));
        self.unrotate(g, out);
    }

    /// In-place `prox_{τ‖·‖_K}`.
    pub(crate) fn prox(&self, beta: &mut [f64], tau: f64) {
        let gamma = self.to_rotated(beta);
        let fmax = self.f.amax();
        let range = |k: usize| self.f[k] > 1e-12 * fmax;
        let inv_norm2: f64 = (0..gamma.len())
            .filter(|&k| range(k))
            .map(|k| (gamma[k] / self.f[k]).powi(2))
            .sum();
        if inv_norm2 <= tau * tau {
            // first branch: drop the range component entirely
            let out = DVector::from_fn(gamma.len(), |k, _| if range(k) { 0.0 } else { gamma[k] });
            self.unrotate(out, beta);
            return;
        }
        // h(α) = Σ (f_k γ_k / (f_k² + α))² − τ² is convex and decreasing with
        // h(0) > 0, so Newton from 0 climbs monotonically to the root.
        let mut alpha = 0.0f64;
        for _ in 0..200 {
            let (mut h, mut dh) = (-tau * tau, 0.0);
            for k in 0..gamma.len() {
                let d = self.f[k] * self.f[k] + alpha;
                if d > 0.0 {
                    let r = self.f[k] * gamma[k] / d;
                    h += r * r;
                    dh -= 2.0 * r * r / d;
                }
            }
            if !(dh < 0.0) {
                break;
            }
            let next = alpha - h / dh;
            if !(next > alpha) || next - alpha <= 1e-14 * next {
                alpha = alpha.max(next);
                break;
            }
            alpha = next;
        }
        let out = DVector::from_fn(gamma.len(), |k, _| {
            gamma[k] * alpha / (self.f[k] * self.f[k] + alpha)
        });
        self.unrotate(out, beta);
    }
}

/// `prox_{τ‖·‖_K}(β)` for a symmetric PSD `K`, with `‖β‖_K = (βᵀKβ)^{1/2}`.
pub fn prox_weighted_l2(beta: &DVector<f64>, k: &DMatrix<f64>, tau: f64) -> Result<DVector<f64>> {
    ensure_dim(k.nrows(), beta.len())?;
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "τ must be positive, got {tau}"
        )));
    }
    let mut out = beta.clone();
    WeightedNorm::new(k).prox(out.as_mut_slice(), tau);
    Ok(out)
}

/// `½‖y − AM̃β‖² + λ Σ_i ‖β_i‖_{K_i}`.
pub fn group_lasso_objective(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    bases: &GroupBases,
    lambda: f64,
    beta: &DVector<f64>,
) -> f64 {
    let n = bases.dim();
    let op = a * bases.stacked();
    let norms: f64 = bases
        .penalties
        .iter()
        .enumerate()
        .map(|(i, k)| WeightedNorm::new(k).norm(&beta.as_slice()[i * n..(i + 1) * n]))
        .sum();
    0.5 * (y - op * beta).norm_squared() + lambda * norms
}

/// Group LASSO over every row of `y`; returns the coefficient rows
/// (length `nL`), the reconstruction rows `Σ M_i β_i`, and a report.
pub fn group_lasso_batch(
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    bases: &GroupBases,
    lambda: f64,
    cfg: &GroupLassoConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>, SolverReport)> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "λ must be >= 0, got {lambda}"
        )));
    }
    let n = bases.dim();
    ensure_dim(n, a.ncols())?;
    ensure_dim(a.nrows(), y.ncols())?;
    let stacked = bases.stacked();
    let op = a * &stacked;
    let norms: Vec<WeightedNorm> = bases.penalties.iter().map(WeightedNorm::new).collect();
    let y_cols = y.transpose();
    let (beta, report) = match cfg.mode {
        GroupLassoMode::ProxGrad => {
            let step = resolve_step(&op, cfg.solver.step)?;
            let tau = step * lambda;
            let prox = |col: &mut [f64]| {
                if tau > 0.0 {
                    for (i, w) in norms.iter().enumerate() {
                        w.prox(&mut col[i * n..(i + 1) * n], tau);
                    }
                }
            };
            proximal_gradient_synthesis(
                "group_lasso_proxgrad",
                a,
                &stacked,
                &y_cols,
                step,
                &cfg.solver,
                prox,
            )
        }
        GroupLassoMode::Adam => adam_solve(&op, &y_cols, &norms, n, lambda, cfg)?,
    };
    let x = &stacked * &beta;
    Ok((beta.transpose(), x.transpose(), report))
}

/// Single-signal [`group_lasso_batch`].
pub fn group_lasso(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    bases: &GroupBases,
    lambda: f64,
    cfg: &GroupLassoConfig,
) -> Result<(DVector<f64>, DVector<f64>, SolverReport)> {
    let (beta, x, report) = group_lasso_batch(&as_row(y), a, bases, lambda, cfg)?;
    Ok((beta.row(0).transpose(), x.row(0).transpose(), report))
}

fn smoothed_objective(
    op: &DMatrix<f64>,
    y: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    norms: &[WeightedNorm],
    n: usize,
    lambda: f64,
    eps: f64,
) -> Vec<f64> {
    let resid = op * beta - y;
    (0..beta.ncols())
        .map(|c| {
            let col = beta.column(c);
            let pen: f64 = norms
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let nb = w.norm(&col.as_slice()[i * n..(i + 1) * n]);
                    (nb * nb + eps * eps).sqrt()
                })
                .sum();
            0.5 * resid.column(c).norm_squared() + lambda * pen
        })
        .collect()
}

/// Adam on the smoothed objective, with the learning rate decayed
/// linearly to 1% over the run.
fn adam_solve(
    op: &DMatrix<f64>,
    y: &DMatrix<f64>,
    norms: &[WeightedNorm],
    n: usize,
    lambda: f64,
    cfg: &GroupLassoConfig,
) -> Result<(DMatrix<f64>, SolverReport)> {
    let (p, count) = (op.ncols(), y.ncols());
    let (b1, b2, eps_adam) = (0.9, 0.999, 1e-8);
    let eps = cfg.smoothing;
    let mut beta = DMatrix::zeros(p, count);
    let mut m: DMatrix<f64> = DMatrix::zeros(p, count);
    let mut v: DMatrix<f64> = DMatrix::zeros(p, count);
    let initial = smoothed_objective(op, y, &beta, norms, n, lambda, eps);
    let op_t = op.transpose();
    let iters = cfg.adam_iters.max(1);
    let mut last_change = 0.0f64;
    for k in 1..=iters {
        let mut g = &op_t * (op * &beta - y);
        if lambda > 0.0 {
            let mut kb = vec![0.0; n];
            for c in 0..count {
                for (i, w) in norms.iter().enumerate() {
                    let range = i * n..(i + 1) * n;
                    let col = &beta.column(c).as_slice()[range.clone()].to_vec();
                    let nb = w.norm(col);
                    w.apply_k(col, &mut kb);
                    let scale = lambda / (nb * nb + eps * eps).sqrt();
                    for (gi, kbi) in g.column_mut(c).as_mut_slice()[range].iter_mut().zip(&kb) {
                        *gi += scale * kbi;
                    }
                }
            }
        }
        let lr = cfg.adam_lr * (1.0 - 0.99 * (k - 1) as f64 / iters as f64);
        let c1 = 1.0 - f64::powi(b1, k as i32);
        let c2 = 1.0 - f64::powi(b2, k as i32);
        last_change = 0.0;
        for idx in 0..p * count {
            m[idx] = b1 * m[idx] + (1.0 - b1) * g[idx];
            v[idx] = b2 * v[idx] + (1.0 - b2) * g[idx] * g[idx];
            let delta = lr * (m[idx] / c1) / ((v[idx] / c2).sqrt() + eps_adam);
            beta[idx] -= delta;
            last_change = last_change.max(delta.abs());
        }
        if k % 100 == 0 || k == iters {
            let now = smoothed_objective(op, y, &beta, norms, n, lambda, eps);
            for (c, (&f0, &f)) in initial.iter().zip(&now).enumerate() {
                if !f.is_finite() || f > 10.0 * f0.max(f64::MIN_POSITIVE) {
                    return Err(Error::Divergence(format!(
                        "group lasso (adam) objective rose from {f0:e} to {f:e} on signal {c}"
                    )));
                }
            }
        }
    }
    let report = SolverReport {
        solver: "group_lasso_adam".into(),
        signals: count,
        step: cfg.adam_lr,
        max_iterations: iters,
        mean_iterations: iters as f64,
        converged: count,
        final_change: last_change,
    };
    Ok((beta, report))
}
