use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::Dictionary;
use super::lasso::soft;
use super::solver::{as_row, proximal_gradient, resolve_step, SolverConfig, SolverReport};
use crate::error::{ensure_dim, Error, Result};
use crate::rng::SeededRng;

const MAX_SWEEPS: usize = 100_000;
/// Sweep cap of the codes inside iterative solvers, where an inexact prox
/// of a possibly rank-deficient dictionary is acceptable.
const INNER_SWEEPS: usize = 200;
const CODE_TOL: f64 = 1e-8;
const UNUSED_ATOM: f64 = 1e-12;

/// Coordinate-descent solver for `min_β ½‖Dβ − z‖² + λ‖β‖₁` with the
/// Gram matrix cached.
pub(crate) struct SparseCoder<'a> {
    d: &'a DMatrix<f64>,
    gram: DMatrix<f64>,
    max_sweeps: usize,
}

impl<'a> SparseCoder<'a> {
    pub(crate) fn new(d: &'a DMatrix<f64>) -> Self {
        Self {
            d,
            gram: d.tr_mul(d),
            max_sweeps: MAX_SWEEPS,
        }
    }

    pub(crate) fn inner(d: &'a DMatrix<f64>) -> Self {
        Self {
            max_sweeps: INNER_SWEEPS,
            ..Self::new(d)
        }
    }

    fn violation(c: &DVector<f64>, q: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
        (0..beta.len())
            .map(|k| {
                let g = q[k] - c[k];
                if beta[k] != 0.0 {
                    (g + lambda * beta[k].signum()).abs()
                } else {
                    (g.abs() - lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Returns the code and whether the residual tolerance was met.
    pub(crate) fn code_from(
        &self,
        z: &[f64],
        lambda: f64,
        mut beta: DVector<f64>,
    ) -> (DVector<f64>, bool) {
        let c = self.d.tr_mul(&DVector::from_column_slice(z));
        let tol = CODE_TOL * c.amax().max(1.0);
        let p = beta.len();
        let mut q = &self.gram * &beta;
        for sweep in 0..self.max_sweeps {
            for k in 0..p {
                let gkk = self.gram[(k, k)];
                if gkk <= 0.0 {
                    continue;
                }
                let rho = c[k] - q[k] + gkk * beta[k];
                let new = soft(rho, lambda) / gkk;
                let delta = new - beta[k];
                if delta != 0.0 {
                    beta[k] = new;
                    q.axpy(delta, &self.gram.column(k), 1.0);
                }
            }
            if sweep % 4 == 3 || sweep < 4 {
                q = &self.gram * &beta;
                if Self::violation(&c, &q, &beta, lambda) <= tol {
                    return (beta, true);
                }
            }
        }
        (beta, false)
    }

    pub(crate) fn code(&self, z: &[f64], lambda: f64) -> (DVector<f64>, bool) {
        self.code_from(z, lambda, DVector::zeros(self.d.ncols()))
    }
}

/// `argmin_β ½‖Dβ − z‖² + λ‖β‖₁`.
pub fn sparse_code(dict: &Dictionary, z: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    ensure_dim(dict.dim(), z.len())?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "λ must be >= 0, got {lambda}"
        )));
    }
    let (beta, ok) = SparseCoder::new(dict.matrix()).code(z.as_slice(), lambda);
    if ok {
        Ok(beta)
    } else {
        Err(Error::NoConvergence {
            solver: "sparse_code",
            iterations: MAX_SWEEPS,
            residual: f64::NAN,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictLearnConfig {
    pub atoms: usize,
    pub lambda: f64,
    pub epochs: usize,
    /// Block-coordinate passes over the atoms per epoch.
    pub update_passes: usize,
    pub seed: u64,
}

impl Default for DictLearnConfig {
    fn default() -> Self {
        Self {
            atoms: 1,
            lambda: 0.1,
            epochs: 20,
            update_passes: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DictLearnOutcome {
    pub dictionary: Dictionary,
    /// Mean of `½‖x − Dβ‖² + λ‖β‖₁` after each coding step.
    pub objective: Vec<f64>,
    /// Unused atoms re-seeded from the worst-represented samples.
    pub replaced_atoms: usize,
    /// Codes that hit the sweep cap.
    pub unconverged_codes: usize,
}

fn code_all(
    coder: &SparseCoder,
    x: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    lambda: f64,
) -> (DMatrix<f64>, usize) {
    let rows: Vec<(DVector<f64>, bool)> = (0..x.nrows())
        .into_par_iter()
        .map(|j| {
            let z: Vec<f64> = x.row(j).iter().copied().collect();
            coder.code_from(&z, lambda, codes.row(j).transpose())
        })
        .collect();
    let mut out = DMatrix::zeros(codes.nrows(), codes.ncols());
    let mut failed = 0;
    for (j, (b, ok)) in rows.iter().enumerate() {
        out.set_row(j, &b.transpose());
        failed += usize::from(!ok);
    }
    (out, failed)
}

fn mean_objective(
    x: &DMatrix<f64>,
    d: &DMatrix<f64>,
    codes: &DMatrix<f64>,
    lambda: f64,
) -> (f64, Vec<f64>) {
    let resid = x - codes * d.transpose();
    let errs: Vec<f64> = (0..x.nrows())
        .map(|j| resid.row(j).norm_squared())
        .collect();
    let l1: f64 = codes.iter().map(|v| v.abs()).sum();
    (
        (0.5 * errs.iter().sum::<f64>() + lambda * l1) / x.nrows() as f64,
        errs,
    )
}

/// Alternating minimization: sparse codes by coordinate descent, then
/// block coordinate descent over the atoms with unit-norm atoms.
pub fn dict_learn(x: &DMatrix<f64>, cfg: &DictLearnConfig) -> Result<DictLearnOutcome> {
    let (count, n) = x.shape();
    let d = cfg.atoms;
    if d == 0 || d > n || count < d {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= d <= n and N >= d (d = {d}, n = {n}, N = {count})"
        )));
    }
    if !(cfg.lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "λ must be >= 0, got {}",
            cfg.lambda
        )));
    }
    let mut rng = SeededRng::with_stream(cfg.seed, 0xd1);
    let picks = rng.subset(count, d);
    let mut dict = DMatrix::zeros(n, d);
    for (j, &row) in picks.iter().enumerate() {
        let col = x.row(row).transpose();
        let col = if col.norm() > 0.0 {
            col
        } else {
            rng.normal_vector(n)
        };
        dict.set_column(j, &col.normalize());
    }

    let mut codes = DMatrix::zeros(count, d);
    let mut objective = Vec::with_capacity(cfg.epochs + 1);
    let mut replaced = 0;
    let mut unconverged = 0;
    for epoch in 0..=cfg.epochs {
        let coder = SparseCoder::inner(&dict);
        let (new_codes, failed) = code_all(&coder, x, &codes, cfg.lambda);
        codes = new_codes;
        unconverged += failed;
        let (obj, errs) = mean_objective(x, &dict, &codes, cfg.lambda);
        objective.push(obj);
        if epoch == cfg.epochs {
            break;
        }
        let mut a = codes.tr_mul(&codes);
        let mut b = x.tr_mul(&codes);
        if (0..d).all(|j| a[(j, j)] <= 0.0) {
            // every code vanished; nothing to fit
            break;
        }
        let mut worst: Vec<usize> = (0..count).collect();
        worst.sort_by(|&p, &q| errs[q].total_cmp(&errs[p]).then(p.cmp(&q)));
        let mut next_worst = worst.into_iter();
        let mut reseeded = vec![false; d];
        // duplicated atoms keep round-off sized codes, so "unused" is relative
        let unused = UNUSED_ATOM * (0..d).map(|j| a[(j, j)]).fold(0.0, f64::max);
        for _ in 0..cfg.update_passes.max(1) {
            for j in 0..d {
                if a[(j, j)] <= unused {
                    if reseeded[j] {
                        continue;
                    }
                    reseeded[j] = true;
                    if let Some(row) = next_worst.next() {
                        let col = x.row(row).transpose();
                        if col.norm() > 0.0 {
                            dict.set_column(j, &col.normalize());
                            codes.column_mut(j).fill(0.0);
                            a.row_mut(j).fill(0.0);
                            a.column_mut(j).fill(0.0);
                            b.column_mut(j).fill(0.0);
                            replaced += 1;
                        }
                    }
                    continue;
                }
                let u = (b.column(j) - &dict * a.column(j)) / a[(j, j)] + dict.column(j);
                let c = u.norm();
                if !(c > 0.0) {
                    continue;
                }
                dict.set_column(j, &(u / c));
                if c < 1.0 {
                    // same products with a shorter code: scale the code up
                    let mut col = codes.column_mut(j);
                    col *= c;
                    for k in 0..d {
                        a[(j, k)] *= c;
                        a[(k, j)] *= c;
                    }
                    let mut bj = b.column_mut(j);
                    bj *= c;
                }
            }
        }
    }
    Ok(DictLearnOutcome {
        dictionary: Dictionary::from_columns_unchecked(dict),
        objective,
        replaced_atoms: replaced,
        unconverged_codes: unconverged,
    })
}

/// Proximal gradient `xᵏ⁺¹ = D·code(xᵏ − tAᵀ(Axᵏ − y), tλ)` on every row of `y`.
pub fn dl_reconstruct_batch(
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    dict: &Dictionary,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<(DMatrix<f64>, SolverReport)> {
    group_dl_reconstruct_batch(y, a, std::slice::from_ref(dict), lambda, cfg)
}

pub fn dl_reconstruct(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    dict: &Dictionary,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolverReport)> {
    let (x, report) = dl_reconstruct_batch(&as_row(y), a, dict, lambda, cfg)?;
    Ok((x.row(0).transpose(), report))
}

/// Index of the dictionary whose prox has the smallest
/// `½‖z − p_i‖² + λ‖β_i‖₁`, with that prox.
pub(crate) fn select_group(
    coders: &[SparseCoder],
    z: &[f64],
    lambda: f64,
) -> (usize, DVector<f64>) {
    let zv = DVector::from_column_slice(z);
    let mut best: Option<(usize, DVector<f64>, f64)> = None;
    for (i, coder) in coders.iter().enumerate() {
        let (beta, _) = coder.code(z, lambda);
        let p = coder.d * &beta;
        let score = 0.5 * (&zv - &p).norm_squared() + lambda * beta.lp_norm(1);
        if best.as_ref().is_none_or(|b| score < b.2) {
            best = Some((i, p, score));
        }
    }
    let (i, p, _) = best.expect("at least one dictionary");
    (i, p)
}

/// Group dictionary reconstruction: each prox step uses the dictionary
/// selected by [`select_group`].
pub fn group_dl_reconstruct_batch(
    y: &DMatrix<f64>,
    a: &DMatrix<f64>,
    dicts: &[Dictionary],
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<(DMatrix<f64>, SolverReport)> {
    if dicts.is_empty() {
        return Err(Error::InvalidArgument("no dictionaries".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "λ must be >= 0, got {lambda}"
        )));
    }
    for dict in dicts {
        ensure_dim(a.ncols(), dict.dim())?;
    }
    ensure_dim(a.nrows(), y.ncols())?;
    let step = resolve_step(a, cfg.step)?;
    let coders: Vec<SparseCoder> = dicts
        .iter()
        .map(|d| SparseCoder::inner(d.matrix()))
        .collect();
    let name = if dicts.len() == 1 { "dl" } else { "group_dl" };
    let (x, report) = proximal_gradient(name, a, &y.transpose(), step, cfg, |col| {
        let (_, p) = select_group(&coders, col, step * lambda);
        col.copy_from_slice(p.as_slice());
    });
    Ok((x.transpose(), report))
}

pub fn group_dl_reconstruct(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    dicts: &[Dictionary],
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<(DVector<f64>, SolverReport)> {
    let (x, report) = group_dl_reconstruct_batch(&as_row(y), a, dicts, lambda, cfg)?;
    Ok((x.row(0).transpose(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::lasso::{lasso_objective, lasso_optimality_residual};

    fn random_dict(rng: &mut SeededRng, n: usize, d: usize) -> Dictionary {
        Dictionary::new(
            Dictionary::from_columns_unchecked(DMatrix::from_fn(n, d, |_, _| rng.normal()))
                .matrix()
                .clone(),
        )
        .unwrap()
    }

    #[test]
    fn zero_lambda_is_least_squares() {
        let mut rng = SeededRng::new(1);
        let dict = random_dict(&mut rng, 6, 4);
        let z = rng.normal_vector(6);
        let beta = sparse_code(&dict, &z, 0.0).unwrap();
        let d = dict.matrix();
        let ls = d.tr_mul(d).try_inverse().unwrap() * d.tr_mul(&z);
        assert!((beta - ls).amax() < 1e-7);
    }

    #[test]
    fn large_lambda_gives_zero_code() {
        let mut rng = SeededRng::new(2);
        let dict = random_dict(&mut rng, 5, 3);
        let z = rng.normal_vector(5);
        let lambda = dict.matrix().tr_mul(&z).amax();
        assert_eq!(sparse_code(&dict, &z, lambda).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn coder_agrees_with_ista() {
        let mut rng = SeededRng::new(3);
        let dict = random_dict(&mut rng, 8, 5);
        let z = rng.normal_vector(8);
        let beta = sparse_code(&dict, &z, 0.2).unwrap();
        assert!(lasso_optimality_residual(dict.matrix(), &z, &beta, 0.2) < 1e-6);
        let basis_free = crate::baselines::solver::SolverConfig {
            tol: 1e-14,
            max_iters: 200_000,
            ..Default::default()
        };
        let op = dict.matrix().clone();
        let step = resolve_step(&op, None).unwrap();
        let (ista, _) = proximal_gradient(
            "t",
            &op,
            &DMatrix::from_column_slice(8, 1, z.as_slice()),
            step,
            &basis_free,
            |c| c.iter_mut().for_each(|v| *v = soft(*v, step * 0.2)),
        );
        let ista = ista.column(0).into_owned();
        let f1 = lasso_objective(&op, &z, &beta, 0.2);
        let f2 = lasso_objective(&op, &z, &ista, 0.2);
        assert!((f1 - f2).abs() < 1e-8);
    }

    #[test]
    fn one_step_denoiser_and_range() {
        let mut rng = SeededRng::new(4);
        let dict = random_dict(&mut rng, 6, 3);
        let y = rng.normal_vector(6);
        let (x, _) = dl_reconstruct(
            &y,
            &DMatrix::identity(6, 6),
            &dict,
            0.1,
            &SolverConfig::with_step(1.0),
        )
        .unwrap();
        let direct = dict.matrix() * sparse_code(&dict, &y, 0.1).unwrap();
        assert!((&x - direct).amax() < 1e-12);
        let d = dict.matrix();
        let proj = d * d.clone().pseudo_inverse(1e-14).unwrap();
        assert!((&x - proj * &x).norm() < 1e-8);
    }

    #[test]
    fn single_dictionary_group_reduction() {
        let mut rng = SeededRng::new(5);
        let dict = random_dict(&mut rng, 5, 3);
        let a = DMatrix::from_fn(5, 5, |i, j| if i == j { 1.0 } else { 0.1 });
        let y = rng.normal_vector(5);
        let cfg = SolverConfig::default();
        let (x1, _) = dl_reconstruct(&y, &a, &dict, 0.05, &cfg).unwrap();
        let (x2, _) = group_dl_reconstruct(&y, &a, &[dict], 0.05, &cfg).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn selector_picks_the_containing_range() {
        let d1 = Dictionary::new(DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        ))
        .unwrap();
        let d2 = Dictionary::new(DMatrix::from_row_slice(
            4,
            2,
            &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
        ))
        .unwrap();
        let coders = [SparseCoder::new(d1.matrix()), SparseCoder::new(d2.matrix())];
        let (i, _) = select_group(&coders, &[0.0, 0.0, 0.3, -0.2], 0.01);
        assert_eq!(i, 1);
        // brute force over both branches
        let z = [0.5, 0.1, 0.4, -0.45];
        let (pick, _) = select_group(&coders, &z, 0.05);
        let scores: Vec<f64> = [&d1, &d2]
            .iter()
            .map(|d| {
                let b = sparse_code(d, &DVector::from_column_slice(&z), 0.05).unwrap();
                lasso_objective(d.matrix(), &DVector::from_column_slice(&z), &b, 0.05)
            })
            .collect();
        assert_eq!(pick, usize::from(scores[1] < scores[0]));
    }

    #[test]
    fn planted_dictionary_is_recovered() {
        let mut rng = SeededRng::new(6);
        let n = 6;
        let planted = DMatrix::from_fn(n, n, |_, _| rng.normal()).qr().q();
        let x = DMatrix::from_fn(300, n, |_, _| 0.0);
        let mut x = x;
        for j in 0..300 {
            let k = j % n;
            let amp = (1.0 + rng.uniform()) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            x.set_row(j, &(planted.column(k) * amp).transpose());
        }
        let out = dict_learn(
            &x,
            &DictLearnConfig {
                atoms: n,
                lambda: 0.01,
                epochs: 30,
                seed: 3,
                ..DictLearnConfig::default()
            },
        )
        .unwrap();
        let d = out.dictionary.matrix();
        for k in 0..n {
            let best = (0..n)
                .map(|j| d.column(j).dot(&planted.column(k)).abs())
                .fold(0.0, f64::max);
            assert!(best.min(1.0).acos().to_degrees() < 5.0, "atom {k}: {best}");
        }
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{:?}", out.objective);
        }
    }

    #[test]
    fn huge_lambda_leaves_dictionary() {
        let mut rng = SeededRng::new(7);
        let x = DMatrix::from_fn(10, 4, |_, _| rng.normal());
        let cfg = DictLearnConfig {
            atoms: 2,
            lambda: 1e6,
            epochs: 3,
            ..DictLearnConfig::default()
        };
        let once = dict_learn(
            &x,
            &DictLearnConfig {
                epochs: 0,
                ..cfg.clone()
            },
        )
        .unwrap();
        let out = dict_learn(&x, &cfg).unwrap();
        assert_eq!(once.dictionary, out.dictionary);
        assert_eq!(out.replaced_atoms, 0);
    }
}
