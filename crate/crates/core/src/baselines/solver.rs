use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Power iterations used for the Lipschitz bound `‖AM‖²`.
pub const POWER_ITERATIONS: usize = 50;

/// Relative slack on the stability bound; the power estimate is a lower
/// bound on `‖AM‖`, so a stepsize of exactly `1/‖AM‖²` must still pass.
const STEP_SLACK: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// `None` picks `0.99/‖AM‖²`.
    pub step: Option<f64>,
    pub max_iters: usize,
    /// Stop when `‖βᵏ⁺¹ − βᵏ‖ ≤ tol·(1 + ‖βᵏ‖)`.
    pub tol: f64,
    /// Nesterov momentum (FISTA); only meaningful for convex proxes.
    pub accelerated: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step: None,
            max_iters: 1000,
            tol: 1e-6,
            accelerated: false,
        }
    }
}

impl SolverConfig {
    pub fn with_step(step: f64) -> Self {
        Self {
            step: Some(step),
            ..Self::default()
        }
    }
}

/// Iteration statistics of one (batched) solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub solver: String,
    pub signals: usize,
    pub step: f64,
    /// Largest iteration count over the batch.
    pub max_iterations: usize,
    pub mean_iterations: f64,
    /// Signals that met the tolerance before the cap.
    pub converged: usize,
    /// Largest last relative change over the batch.
    pub final_change: f64,
}

/// A vector as a one-row matrix.
pub(crate) fn as_row(y: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, y.len(), y.as_slice())
}

/// Resolves and checks the stepsize against `1/‖op‖²`.
pub fn resolve_step(op: &DMatrix<f64>, step: Option<f64>) -> Result<f64> {
    let norm = linalg::spectral_norm(op, POWER_ITERATIONS);
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "operator norm is {norm}, need a positive finite value"
        )));
    }
    let bound = 1.0 / (norm * norm);
    match step {
        None => Ok(0.99 * bound),
        Some(t) if t > 0.0 && t <= bound * (1.0 + STEP_SLACK) => Ok(t),
        Some(t) => Err(Error::StepTooLarge { step: t, bound }),
    }
}

/// Proximal-gradient iterations `βᵏ⁺¹ = prox(βᵏ − t·opᵀ(op·βᵏ − y))` from
/// `β⁰ = 0`, run in lockstep over the columns of `y` (`m × N`).
///
/// `prox` maps each column in place. Columns that meet the tolerance are
/// frozen and removed from the active set. With `cfg.accelerated` the
/// gradient step is taken at the FISTA extrapolation point instead, with
/// a per-column momentum restart whenever the step opposes the motion.
pub(crate) fn proximal_gradient<P>(
    name: &str,
    op: &DMatrix<f64>,
    y: &DMatrix<f64>,
    step: f64,
    cfg: &SolverConfig,
    prox: P,
) -> (DMatrix<f64>, SolverReport)
where
    P: Fn(&mut [f64]) + Sync,
{
    run(name, op, None, y, step, cfg, prox)
}

/// [`proximal_gradient`] for `op = a·synthesis`, with the stopping rule
/// applied to the synthesized signal `synthesis·β`. Redundant
/// parametrizations keep drifting in `β` long after the signal settles.
pub(crate) fn proximal_gradient_synthesis<P>(
    name: &str,
    a: &DMatrix<f64>,
    synthesis: &DMatrix<f64>,
    y: &DMatrix<f64>,
    step: f64,
    cfg: &SolverConfig,
    prox: P,
) -> (DMatrix<f64>, SolverReport)
where
    P: Fn(&mut [f64]) + Sync,
{
    run(name, a, Some(synthesis), y, step, cfg, prox)
}

/// `cur + w·(cur − prev)` column-wise.
fn extrapolate(cur: &DMatrix<f64>, prev: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut out = cur.clone();
    for (c, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            let shift = (cur.column(c) - prev.column(c)) * w;
            out.column_mut(c).axpy(1.0, &shift, 1.0);
        }
    }
    out
}

fn run<P>(
    name: &str,
    a: &DMatrix<f64>,
    synthesis: Option<&DMatrix<f64>>,
    y: &DMatrix<f64>,
    step: f64,
    cfg: &SolverConfig,
    prox: P,
) -> (DMatrix<f64>, SolverReport)
where
    P: Fn(&mut [f64]) + Sync,
{
    let p = synthesis.map_or(a.ncols(), |s| s.ncols());
    let count = y.ncols();
    let mut out = DMatrix::zeros(p, count);
    let mut iterations = vec![0usize; count];
    let mut changes = vec![0.0f64; count];
    let mut active: Vec<usize> = (0..count).collect();
    let mut beta = DMatrix::zeros(p, count);
    let mut prev: DMatrix<f64> = DMatrix::zeros(p, count);
    // Synthesized signals of `beta` and `prev`; only kept with a synthesis.
    let mut x_beta = synthesis.map(|s| DMatrix::zeros(s.nrows(), count));
    let mut x_prev = x_beta.clone();
    let mut momentum = vec![1.0f64; count];
    let mut y_act = y.clone();
    let a_t = a.transpose();
    let s_t = synthesis.map(|s| s.transpose());
    let mut converged = 0;
    for iter in 1..=cfg.max_iters.max(1) {
        if active.is_empty() {
            break;
        }
        let mut weights = vec![0.0; active.len()];
        if cfg.accelerated {
            for (w, t) in weights.iter_mut().zip(momentum.iter_mut()) {
                let next_t = 0.5 * (1.0 + (1.0 + 4.0 * *t * *t).sqrt());
                *w = (*t - 1.0) / next_t;
                *t = next_t;
            }
        }
        let point = extrapolate(&beta, &prev, &weights);
        let mut grad = match (&x_beta, &x_prev) {
            (Some(xb), Some(xp)) => &a_t * (a * extrapolate(xb, xp, &weights) - &y_act),
            _ => &a_t * (a * &point - &y_act),
        };
        if let Some(st) = &s_t {
            grad = st * grad;
        }
        let mut next = &point - grad * step;
        next.as_mut_slice().par_chunks_mut(p).for_each(&prox);
        let mut x_next = synthesis.map(|s| s * &next);
        let mut keep = Vec::with_capacity(active.len());
        for (c, &j) in active.iter().enumerate() {
            let (diff, size) = match (&x_beta, &x_next) {
                (Some(old), Some(new)) => {
                    ((new.column(c) - old.column(c)).norm(), old.column(c).norm())
                }
                _ => (
                    (next.column(c) - beta.column(c)).norm(),
                    beta.column(c).norm(),
                ),
            };
            iterations[j] = iter;
            changes[j] = diff / (1.0 + size);
            if cfg.accelerated
                && (point.column(c) - next.column(c)).dot(&(next.column(c) - beta.column(c))) > 0.0
            {
                momentum[c] = 1.0;
            }
            if diff <= cfg.tol * (1.0 + size) {
                out.set_column(j, &next.column(c));
                converged += 1;
            } else {
                keep.push(c);
            }
        }
        if keep.len() < active.len() {
            if keep.is_empty() {
                active.clear();
                break;
            }
            next = next.select_columns(&keep);
            beta = beta.select_columns(&keep);
            x_next = x_next.map(|m| m.select_columns(&keep));
            x_beta = x_beta.map(|m| m.select_columns(&keep));
            y_act = y_act.select_columns(&keep);
            momentum = keep.iter().map(|&c| momentum[c]).collect();
            active = keep.iter().map(|&c| active[c]).collect();
        }
        prev = std::mem::replace(&mut beta, next);
        x_prev = std::mem::replace(&mut x_beta, x_next);
    }
    for (c, &j) in active.iter().enumerate() {
        out.set_column(j, &beta.column(c));
    }
    let report = SolverReport {
        solver: name.to_string(),
        signals: count,
        step,
        max_iterations: iterations.iter().copied().max().unwrap_or(0),
        mean_iterations: if count == 0 {
            0.0
        } else {
            iterations.iter().sum::<usize>() as f64 / count as f64
        },
        converged,
        final_change: changes.iter().fold(0.0, |a, &b| a.max(b)),
    };
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_bound_is_enforced() {
        let op = DMatrix::<f64>::identity(3, 3) * 2.0;
        assert!((resolve_step(&op, None).unwrap() - 0.99 / 4.0).abs() < 1e-12);
        assert_eq!(resolve_step(&op, Some(0.25)).unwrap(), 0.25);
        assert!(matches!(
            resolve_step(&op, Some(0.3)),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn identity_prox_solves_least_squares() {
        let op = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let y = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let step = resolve_step(&op, None).unwrap();
        let cfg = SolverConfig {
            tol: 1e-14,
            max_iters: 10_000,
            ..SolverConfig::default()
        };
        let (beta, report) = proximal_gradient("ls", &op, &y, step, &cfg, |_| {});
        let normal = op.tr_mul(&op).try_inverse().unwrap() * op.tr_mul(&y);
        assert!((beta - normal).amax() < 1e-10);
        assert_eq!(report.converged, 1);
    }

    #[test]
    fn momentum_reaches_the_same_point_sooner() {
        let op = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, 0.0, 0.0, 0.3, 0.2, 0.1, 0.0, 0.5]);
        let y = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let step = resolve_step(&op, None).unwrap();
        let plain = SolverConfig {
            tol: 1e-12,
            max_iters: 100_000,
            ..SolverConfig::default()
        };
        let fast = SolverConfig {
            accelerated: true,
            ..plain.clone()
        };
        let shrink = |c: &mut [f64]| {
            c.iter_mut()
                .for_each(|v| *v = super::super::lasso::soft(*v, step * 0.05))
        };
        let (a, ra) = proximal_gradient("ista", &op, &y, step, &plain, shrink);
        let (b, rb) = proximal_gradient("fista", &op, &y, step, &fast, shrink);
        assert!((a - b).amax() < 1e-6);
        assert!(rb.max_iterations < ra.max_iterations);
    }

    #[test]
    fn synthesis_form_matches_dense_operator() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 0.8]);
        let s = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.6, 0.8, 0.0, 1.0, -0.8, 0.6]);
        let op = &a * &s;
        let y = DMatrix::from_column_slice(2, 2, &[1.0, -0.5, 0.3, 2.0]);
        let step = resolve_step(&op, None).unwrap();
        let cfg = SolverConfig {
            tol: 0.0,
            max_iters: 40,
            accelerated: true,
            ..SolverConfig::default()
        };
        let shrink = |c: &mut [f64]| {
            c.iter_mut()
                .for_each(|v| *v = super::super::lasso::soft(*v, step * 0.1))
        };
        let (dense, _) = proximal_gradient("d", &op, &y, step, &cfg, shrink);
        let (factored, _) = proximal_gradient_synthesis("f", &a, &s, &y, step, &cfg, shrink);
        assert!((dense - factored).amax() < 1e-12);
    }
}
