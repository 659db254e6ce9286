use nalgebra::{DMatrix, DVector};

use super::basis::{SparsitySet, Subspace, SynthesisBasis};
use super::solver::{as_row, proximal_gradient, resolve_step, SolverConfig, SolverReport};
use crate::error::{ensure_dim, Result};

/// Keeps the `s` largest magnitudes among the non-fixed coordinates; the
/// lowest index wins ties.
fn keep_top(beta: &mut [f64], s: usize, fixed: &[bool]) {
    let mut free: Vec<usize> = (0..beta.len()).filter(|&i| !fixed[i]).collect();
    if s >= free.len() {
        return;
    }
    free.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()).then(a.cmp(&b)));
    for &i in &free[s..] {
        beta[i] = 0.0;
    }
}

/// Projection onto one subspace and its squared distance to `beta`.
fn project_onto(beta: &[f64], part: &Subspace) -> (Vec<f64>, f64) {
    match part {
        Subspace::Coordinates(idx) => {
            let mut out = vec![0.0; beta.len()];
            for &i in idx {
                out[i] = beta[i];
            }
            let dist = beta.iter().zip(&out).map(|(b, o)| (b - o).powi(2)).sum();
            (out, dist)
        }
        Subspace::Frame(f) => {
            let b = DVector::from_column_slice(beta);
            let p = f * f.tr_mul(&b);
            let dist = (&b - &p).norm_squared();
            (p.as_slice().to_vec(), dist)
        }
    }
}

pub(crate) struct Projector<'a> {
    set: &'a SparsitySet,
    fixed_mask: Vec<bool>,
}

impl<'a> Projector<'a> {
    pub(crate) fn new(set: &'a SparsitySet, n: usize) -> Self {
        let mut fixed_mask = vec![false; n];
        if let SparsitySet::TopS { fixed, .. } = set {
            for &i in fixed {
                fixed_mask[i] = true;
            }
        }
        Self { set, fixed_mask }
    }

    pub(crate) fn apply(&self, beta: &mut [f64]) {
        match self.set {
            SparsitySet::TopS { s, .. } => keep_top(beta, *s, &self.fixed_mask),
            SparsitySet::Union(parts) => {
                let mut best: Option<(Vec<f64>, f64)> = None;
                for part in parts {
                    let (p, d) = project_onto(beta, part);
                    if best.as_ref().is_none_or(|b| d < b.1) {
                        best = Some((p, d));
                    }
                }
                beta.copy_from_slice(&best.expect("nonempty union").0);
            }
        }
    }
}

/// Euclidean projection onto the sparsity set.
pub fn project_sparse(beta: &DVector<f64>, set: &SparsitySet) -> Result<DVector<f64>> {
    set.validate(beta.len())?;
    let mut out = beta.clone();
    Projector::new(set, beta.len()).apply(out.as_mut_slice());
    Ok(out)
}

/// IHT `βᵏ⁺¹ = P_S(βᵏ − t·MᵀAᵀ(AMβᵏ − y))` on every row of `y`.
pub fn iht_batch(
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    basis: &SynthesisBasis,
    set: &SparsitySet,
    cfg: &SolverConfig,
) -> Result<(DMatrix<f64>, SolverReport)> {
    ensure_dim(a.ncols(), basis.dim())?;
    ensure_dim(a.nrows(), y.ncols())?;
    set.validate(basis.dim())?;
    let op = a * basis.matrix();
    let step = resolve_step(&op, cfg.step)?;
    let projector = Projector::new(set, basis.dim());
    let (beta, report) = proximal_gradient("iht", &op, &y.transpose(), step, cfg, |col| {
        projector.apply(col)
    });
    Ok((beta.transpose(), report))
}

/// Single-signal [`iht_batch`].
pub fn iht(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    basis: &SynthesisBasis,
    set: &SparsitySet,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolverReport)> {
    let (beta, report) = iht_batch(&as_row(y), a, basis, set, cfg)?;
    Ok((beta.row(0).transpose(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn top_s_keeps_largest() {
        let b = DVector::from_vec(vec![3.0, -5.0, 1.0, 0.0]);
        let p = project_sparse(&b, &SparsitySet::top_s(2)).unwrap();
        assert_eq!(p, DVector::from_vec(vec![3.0, -5.0, 0.0, 0.0]));
        assert_eq!(project_sparse(&b, &SparsitySet::top_s(4)).unwrap(), b);
    }

    #[test]
    fn ties_prefer_low_index() {
        let b = DVector::from_vec(vec![1.0, -1.0, 1.0]);
        let p = project_sparse(&b, &SparsitySet::top_s(1)).unwrap();
        assert_eq!(p, DVector::from_vec(vec![1.0, 0.0, 0.0]));
    }

    #[test]
    fn fixed_coordinates_are_kept() {
        let b = DVector::from_vec(vec![0.1, 3.0, -2.0, 0.5]);
        let set = SparsitySet::TopS {
            s: 1,
            fixed: vec![0],
        };
        assert_eq!(
            project_sparse(&b, &set).unwrap(),
            DVector::from_vec(vec![0.1, 3.0, 0.0, 0.0])
        );
    }

    #[test]
    fn union_matches_brute_force() {
        let mut rng = SeededRng::new(6);
        let planes = [vec![0, 1], vec![1, 2], vec![2, 3]];
        let set = SparsitySet::Union(planes.iter().cloned().map(Subspace::Coordinates).collect());
        for _ in 0..20 {
            let b = rng.normal_vector(4);
            let p = project_sparse(&b, &set).unwrap();
            let best = planes
                .iter()
                .map(|pl| {
                    let mut q = DVector::zeros(4);
                    for &i in pl {
                        q[i] = b[i];
                    }
                    q
                })
                .min_by(|x, y| (&b - x).norm().total_cmp(&(&b - y).norm()))
                .unwrap();
            assert_eq!(p, best);
        }
    }

    #[test]
    fn one_step_denoiser() {
        let mut rng = SeededRng::new(7);
        let m = DMatrix::from_fn(6, 6, |_, _| rng.normal()).qr().q();
        let basis = SynthesisBasis::new(m.clone()).unwrap();
        let y = rng.normal_vector(6);
        let set = SparsitySet::top_s(2);
        let (beta, _) = iht(
            &y,
            &DMatrix::identity(6, 6),
            &basis,
            &set,
            &SolverConfig::with_step(1.0),
        )
        .unwrap();
        assert!((beta - project_sparse(&m.tr_mul(&y), &set).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn exact_sparse_recovery() {
        let mut x = DVector::zeros(8);
        x[2] = 1.5;
        x[6] = -0.7;
        let (beta, _) = iht(
            &x,
            &DMatrix::identity(8, 8),
            &SynthesisBasis::canonical(8),
            &SparsitySet::top_s(2),
            &SolverConfig::with_step(1.0),
        )
        .unwrap();
        assert_eq!(beta, x);
    }

    #[test]
    fn full_space_is_least_squares() {
        let mut rng = SeededRng::new(8);
        let a = DMatrix::from_fn(5, 3, |_, _| rng.normal());
        let y = rng.normal_vector(5);
        let cfg = SolverConfig {
            tol: 1e-14,
            max_iters: 100_000,
            ..SolverConfig::default()
        };
        let (beta, _) = iht(
            &y,
            &a,
            &SynthesisBasis::canonical(3),
            &SparsitySet::top_s(3),
            &cfg,
        )
        .unwrap();
        let ls = a.tr_mul(&a).try_inverse().unwrap() * a.tr_mul(&y);
        assert!((beta - ls).amax() < 1e-9);
    }
}
