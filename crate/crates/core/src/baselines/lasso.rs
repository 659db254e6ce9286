use nalgebra::{DMatrix, DVector};

use super::basis::SynthesisBasis;
use super::solver::{as_row, proximal_gradient, resolve_step, SolverConfig, SolverReport};
use crate::error::{ensure_dim, Error, Result};

/// `S_λ(v)_i = max(|v_i| − λ, 0)·sign(v_i)`.
pub fn soft_threshold(v: &DVector<f64>, lambda: f64) -> DVector<f64> {
    v.map(|x| soft(x, lambda))
}

#[inline]
pub(crate) fn soft(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "λ must be finite and >= 0, got {lambda}"
        )))
    }
}

/// ISTA for `½‖y − AMβ‖² + λ‖β‖₁` on every row of `y`, returning the
/// coefficient rows.
///
/// Coordinates flagged `false` in `penalized` are left unthresholded.
pub fn ista_lasso_batch(
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    basis: &SynthesisBasis,
    lambda: f64,
    penalized: Option<&[bool]>,
    cfg: &SolverConfig,
) -> Result<(DMatrix<f64>, SolverReport)> {
    check_lambda(lambda)?;
    ensure_dim(a.ncols(), basis.dim())?;
    ensure_dim(a.nrows(), y.ncols())?;
    if let Some(mask) = penalized {
        ensure_dim(basis.dim(), mask.len())?;
    }
    let op = a * basis.matrix();
    let step = resolve_step(&op, cfg.step)?;
    let thr = step * lambda;
    let (beta, report) =
        proximal_gradient(
            "ista",
            &op,
            &y.transpose(),
            step,
            cfg,
            |col| match penalized {
                None => col.iter_mut().for_each(|v| *v = soft(*v, thr)),
                Some(mask) => col
                    .iter_mut()
                    .zip(mask)
                    .filter(|(_, &p)| p)
                    .for_each(|(v, _)| *v = soft(*v, thr)),
            },
        );
    Ok((beta.transpose(), report))
}

/// Single-signal [`ista_lasso_batch`].
pub fn ista_lasso(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    basis: &SynthesisBasis,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolverReport)> {
    let (beta, report) = ista_lasso_batch(&as_row(y), a, basis, lambda, None, cfg)?;
    Ok((beta.row(0).transpose(), report))
}

/// Largest violation of the subgradient optimality conditions of
/// `½‖y − Bβ‖² + λ‖β‖₁`: `|gᵢ + λ·sign βᵢ|` on the support and
/// `max(|gᵢ| − λ, 0)` off it, with `g = Bᵀ(Bβ − y)`.
pub fn lasso_optimality_residual(
    b: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    lambda: f64,
) -> f64 {
    let g = b.tr_mul(&(b * beta - y));
    g.iter()
        .zip(beta.iter())
        .map(|(&gi, &bi)| {
            if bi != 0.0 {
                (gi + lambda * bi.signum()).abs()
            } else {
                (gi.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// `½‖y − Bβ‖² + λ‖β‖₁`.
pub fn lasso_objective(
    b: &DMatrix<f64>,
    y: &DVector<f64>,
    beta: &DVector<f64>,
    lambda: f64,
) -> f64 {
    0.5 * (y - b * beta).norm_squared() + lambda * beta.lp_norm(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn soft_threshold_cases() {
        let v = DVector::from_vec(vec![2.5, -0.3, -4.0]);
        assert_eq!(
            soft_threshold(&v, 1.0),
            DVector::from_vec(vec![1.5, 0.0, -3.0])
        );
        assert_eq!(soft_threshold(&v, 0.0), v);
    }

    #[test]
    fn unregularized_identity_returns_y() {
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let (beta, _) = ista_lasso(
            &y,
            &DMatrix::identity(3, 3),
            &SynthesisBasis::canonical(3),
            0.0,
            &SolverConfig::with_step(1.0),
        )
        .unwrap();
        assert_eq!(beta, y);
    }

    #[test]
    fn single_step_denoiser_with_rotation() {
        let mut rng = SeededRng::new(4);
        let m = DMatrix::from_fn(5, 5, |_, _| rng.normal()).qr().q();
        let basis = SynthesisBasis::new(m.clone()).unwrap();
        let y = rng.normal_vector(5);
        let (beta, report) = ista_lasso(
            &y,
            &DMatrix::identity(5, 5),
            &basis,
            0.3,
            &SolverConfig::with_step(1.0),
        )
        .unwrap();
        assert!((beta - soft_threshold(&m.tr_mul(&y), 0.3)).amax() < 1e-12);
        assert!(report.max_iterations <= 2);
    }

    #[test]
    fn ista_meets_optimality() {
        let mut rng = SeededRng::new(5);
        let a = DMatrix::from_fn(8, 8, |_, _| rng.normal());
        let basis = SynthesisBasis::canonical(8);
        let y = rng.normal_vector(8);
        let cfg = SolverConfig {
            tol: 1e-13,
            max_iters: 200_000,
            ..SolverConfig::default()
        };
        let (beta, _) = ista_lasso(&y, &a, &basis, 0.5, &cfg).unwrap();
        assert!(lasso_optimality_residual(&a, &y, &beta, 0.5) < 1e-6);
    }

    #[test]
    fn unpenalized_coordinates_survive() {
        let y = DMatrix::from_row_slice(1, 3, &[0.1, 0.1, 5.0]);
        let mask = [false, true, true];
        let (beta, _) = ista_lasso_batch(
            &y,
            &DMatrix::identity(3, 3),
            &SynthesisBasis::canonical(3),
            1.0,
            Some(&mask),
            &SolverConfig::with_step(1.0),
        )
        .unwrap();
        assert_eq!(
            beta.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.1, 0.0, 4.0]
        );
    }

    #[test]
    fn oversized_step_is_rejected() {
        let y = DVector::zeros(2);
        let a = DMatrix::identity(2, 2) * 3.0;
        let err = ista_lasso(
            &y,
            &a,
            &SynthesisBasis::canonical(2),
            0.1,
            &SolverConfig::with_step(1.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }));
    }
}
