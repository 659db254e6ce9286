//! The reconstruction methods, each fitted on the training set and applied
//! to the noisy test observations.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::config::{ExperimentConfig, Method};
use super::metrics::mean_relative_mse;
use super::tuning::{tune_discrete, tune_lambda, Tuned};
use crate::baselines::{
    dict_learn, dl_reconstruct_batch, group_dl_reconstruct_batch, group_lasso_batch,
    group_svd_bases, iht_batch, ista_lasso_batch, svd_basis, DictLearnConfig, Dictionary,
    GroupLassoConfig, SolverConfig, SolverReport, SparsitySet, Subspace, SynthesisBasis,
};
use crate::datasets::{known_basis_split, Dataset, WaveletBasis};
use crate::error::{Error, Result};
use crate::estimator::PreparedEstimator;
use crate::model::{ForwardOperator, NoiseModel};
use crate::rng::SeededRng;
use crate::supervised::{train, TrainConfig};
use crate::unsupervised::fit_with_labels;

/// Noise streams; test noise never shares a stream with tuning noise.
pub(crate) const TEST_NOISE: u64 = 0x7e;
pub(crate) const TUNE_NOISE: u64 = 0x70;
pub(crate) const TRAIN_NOISE: u64 = 0x71;

/// Shared inputs of every method.
pub(crate) struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub data: &'a Dataset,
    pub operator: ForwardOperator,
    /// Dense `m × n` forward matrix.
    pub a: DMatrix<f64>,
    pub noise: NoiseModel,
    pub sigma: f64,
    pub test_y: DMatrix<f64>,
    pub tune_x: DMatrix<f64>,
    pub tune_y: DMatrix<f64>,
    pub labels: Option<std::result::Result<Vec<usize>, String>>,
    pub solver: SolverConfig,
}

/// Observations `Ax + σg` for every row of `x`.
pub(crate) fn observe(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    sigma: f64,
    rng: &mut SeededRng,
) -> DMatrix<f64> {
    let mut y = x * a.transpose();
    for j in 0..y.nrows() {
        for k in 0..y.ncols() {
            y[(j, k)] += sigma * rng.normal();
        }
    }
    y
}

pub(crate) struct Run {
    pub estimate: DMatrix<f64>,
    pub hyperparameters: BTreeMap<String, f64>,
    pub curve: Vec<(f64, f64)>,
    pub solver: Option<SolverReport>,
    pub notes: BTreeMap<String, String>,
}

impl Run {
    fn plain(estimate: DMatrix<f64>) -> Self {
        Self {
            estimate,
            hyperparameters: BTreeMap::new(),
            curve: Vec::new(),
            solver: None,
            notes: BTreeMap::new(),
        }
    }
}

impl Context<'_> {
    fn n(&self) -> usize {
        self.a.ncols()
    }

    fn clusters(&self) -> usize {
        self.cfg.dataset.variant.components()
    }

    fn train_x(&self) -> &DMatrix<f64> {
        &self.data.train.signals
    }

    fn labels(&self) -> Result<&[usize]> {
        match &self.labels {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::Config(format!("clustering failed: {e}"))),
            None => Err(Error::Config("clustering was not computed".into())),
        }
    }

    fn sparsity_grid(&self, limit: usize) -> Vec<usize> {
        let mut g: Vec<usize> = self
            .cfg
            .tuning
            .sparsity
            .iter()
            .copied()
            .filter(|&s| s >= 1 && s <= limit)
            .collect();
        if g.is_empty() {
            g.push(limit.max(1));
        }
        g
    }

    fn fixed(&self, m: Method) -> Option<f64> {
        self.cfg.fixed.get(m.code()).copied()
    }

    /// Tunes λ on the tuning slice, then reconstructs the test set.
    fn lambda_method<F>(&self, m: Method, solve: F) -> Result<Run>
    where
        F: Fn(f64, &DMatrix<f64>) -> Result<(DMatrix<f64>, SolverReport)>,
    {
        let tuned = match self.fixed(m) {
            Some(l) => Tuned {
                best: l,
                score: f64::NAN,
                curve: Vec::new(),
            },
            None => tune_lambda(
                &self.cfg.tuning.lambdas,
                &self.cfg.tuning.refine_decades,
                |l| mean_relative_mse(&self.tune_x, &solve(l, &self.tune_y)?.0),
            )?,
        };
        let (estimate, report) = solve(tuned.best, &self.test_y)?;
        let mut run = Run::plain(estimate);
        run.hyperparameters.insert("lambda".into(), tuned.best);
        run.curve = tuned.curve;
        run.solver = Some(report);
        Ok(run)
    }

    /// Tunes the sparsity level, then reconstructs the test set.
    fn sparsity_method<F>(&self, m: Method, limit: usize, solve: F) -> Result<Run>
    where
        F: Fn(usize, &DMatrix<f64>) -> Result<(DMatrix<f64>, SolverReport)>,
    {
        let tuned = match self.fixed(m) {
            Some(s) => Tuned {
                best: s as usize,
                score: f64::NAN,
                curve: Vec::new(),
            },
            None => tune_discrete(&self.sparsity_grid(limit), |s| {
                mean_relative_mse(&self.tune_x, &solve(s, &self.tune_y)?.0)
            })?,
        };
        let (estimate, report) = solve(tuned.best, &self.test_y)?;
        let mut run = Run::plain(estimate);
        run.hyperparameters.insert("s".into(), tuned.best as f64);
        run.curve = tuned.curve;
        run.solver = Some(report);
        Ok(run)
    }

    pub fn run(&self, m: Method) -> Result<Run> {
        match m {
            Method::Oracle => self.oracle(),
            Method::A => self.supervised(),
            Method::B => self.unsupervised(),
            Method::C => self.dictionary(),
            Method::D => self.group_dictionary(),
            Method::E => self.iht_svd(),
            Method::F => self.iht_group_svd(),
            Method::G => self.iht_known(),
            Method::H => self.lasso_svd(),
            Method::I => self.group_lasso(),
            Method::J => self.lasso_known(),
        }
    }

    /// Momentum is safe for the convex objectives only.
    fn convex_solver(&self) -> SolverConfig {
        SolverConfig {
            accelerated: true,
            ..self.solver.clone()
        }
    }

    fn oracle(&self) -> Result<Run> {
        let model = self
            .data
            .true_model()
            .ok_or_else(|| Error::Config("this dataset has no exact mixture model".into()))??;
        let est = PreparedEstimator::new(&model, &self.operator, &self.noise)?;
        Ok(Run::plain(est.estimate_batch(&self.test_y)?))
    }

    fn supervised(&self) -> Result<Run> {
        let b = &self.cfg.budget;
        let n = self.n();
        let x = self.train_x();
        let y = observe(
            x,
            &self.a,
            self.sigma,
            &mut SeededRng::with_stream(self.cfg.seed, TRAIN_NOISE),
        );
        let tc = TrainConfig {
            epochs: b.train_epochs,
            batch_size: b.train_batch,
            learning_rate: b.train_lr,
            rank: Some(b.train_rank.min(n)),
            components: self.clusters(),
            seed: self.cfg.seed,
            ..TrainConfig::default()
        };
        let outcome = train(x, &y, &self.operator, &self.noise, &tc, None)?;
        let est = PreparedEstimator::new(&outcome.model, &self.operator, &self.noise)?;
        let mut run = Run::plain(est.estimate_batch(&self.test_y)?);
        let first = outcome.history.first().map_or(f64::NAN, |r| r.train_risk);
        let last = outcome.history.last().map_or(f64::NAN, |r| r.train_risk);
        run.hyperparameters
            .insert("epochs".into(), tc.epochs as f64);
        run.hyperparameters
            .insert("rank".into(), tc.effective_rank(n) as f64);
        run.notes
            .insert("train_risk".into(), format!("{first:.6e} -> {last:.6e}"));
        Ok(run)
    }

    fn unsupervised(&self) -> Result<Run> {
        let fit = fit_with_labels(
            self.train_x(),
            self.labels()?,
            self.clusters(),
            &self.operator,
            &self.noise,
        )?;
        let mut run = Run::plain(fit.estimator.estimate_batch(&self.test_y)?);
        run.hyperparameters
            .insert("clusters".into(), fit.stats.effective_clusters() as f64);
        Ok(run)
    }

    fn learn(&self, x: &DMatrix<f64>, atoms: usize, seed: u64) -> Result<Dictionary> {
        let cfg = DictLearnConfig {
            atoms,
            lambda: self.sigma,
            epochs: self.cfg.budget.dict_epochs,
            seed,
            ..DictLearnConfig::default()
        };
        Ok(dict_learn(x, &cfg)?.dictionary)
    }

    fn dictionary(&self) -> Result<Run> {
        let atoms = (self.n() / 2).max(1);
        let dict = self.learn(self.train_x(), atoms, self.cfg.seed)?;
        let mut run = self.lambda_method(Method::C, |l, y| {
            dl_reconstruct_batch(y, &self.a, &dict, l, &self.convex_solver())
        })?;
        run.hyperparameters.insert("atoms".into(), atoms as f64);
        run.hyperparameters
            .insert("learning_lambda".into(), self.sigma);
        Ok(run)
    }

    fn group_dictionary(&self) -> Result<Run> {
        let l = self.clusters();
        let atoms = (self.n() / (2 * l)).max(1);
        let labels = self.labels()?;
        let x = self.train_x();
        let mut dicts = Vec::new();
        for c in 0..l {
            let rows: Vec<usize> = (0..x.nrows()).filter(|&j| labels[j] == c).collect();
            if rows.is_empty() {
                continue;
            }
            let group = x.select_rows(&rows);
            dicts.push(self.learn(
                &group,
                atoms.min(rows.len()),
                self.cfg.seed.wrapping_add(c as u64),
            )?);
        }
        let mut run = self.lambda_method(Method::D, |lam, y| {
            group_dl_reconstruct_batch(y, &self.a, &dicts, lam, &self.solver)
        })?;
        run.hyperparameters.insert("atoms".into(), atoms as f64);
        run.hyperparameters
            .insert("dictionaries".into(), dicts.len() as f64);
        run.hyperparameters
            .insert("learning_lambda".into(), self.sigma);
        Ok(run)
    }

    fn iht_svd(&self) -> Result<Run> {
        let basis = svd_basis(self.train_x())?;
        self.sparsity_method(Method::E, self.n(), |s, y| {
            let (beta, report) =
                iht_batch(y, &self.a, &basis, &SparsitySet::top_s(s), &self.solver)?;
            Ok((beta * basis.matrix().transpose(), report))
        })
    }

    fn iht_group_svd(&self) -> Result<Run> {
        let n = self.n();
        let grid = self.sparsity_grid(n);
        let largest = self
            .fixed(Method::F)
            .map_or_else(|| *grid.iter().max().unwrap(), |s| s as usize);
        let groups = group_svd_bases(
            self.train_x(),
            self.labels()?,
            self.clusters(),
            largest.min(n),
        )?;
        let canonical = SynthesisBasis::canonical(n);
        self.sparsity_method(Method::F, n, |s, y| {
            let frames = groups
                .bases
                .bases
                .iter()
                .map(|b| Subspace::Frame(b.matrix().columns(0, s).into_owned()))
                .collect();
            iht_batch(
                y,
                &self.a,
                &canonical,
                &SparsitySet::Union(frames),
                &self.solver,
            )
        })
    }

    fn lasso_svd(&self) -> Result<Run> {
        let basis = svd_basis(self.train_x())?;
        self.lambda_method(Method::H, |l, y| {
            let (beta, report) =
                ista_lasso_batch(y, &self.a, &basis, l, None, &self.convex_solver())?;
            Ok((beta * basis.matrix().transpose(), report))
        })
    }

    fn group_lasso(&self) -> Result<Run> {
        let groups = group_svd_bases(self.train_x(), self.labels()?, self.clusters(), 1)?;
        let cfg = GroupLassoConfig {
            solver: self.convex_solver(),
            ..GroupLassoConfig::default()
        };
        self.lambda_method(Method::I, |l, y| {
            let (_, x, report) = group_lasso_batch(y, &self.a, &groups.bases, l, &cfg)?;
            Ok((x, report))
        })
    }

    /// Known sparsifying basis: canonical for the Gaussian mixture, the
    /// zero-padded wavelet domain with fixed coarse coefficients otherwise.
    fn known_domain(&self) -> Result<KnownDomain> {
        let n = self.n();
        if !self.cfg.dataset.variant.is_piecewise_smooth() {
            return Ok(KnownDomain {
                n,
                basis: SynthesisBasis::canonical(n),
                a: self.a.clone(),
                fixed: Vec::new(),
            });
        }
        let wavelet = WaveletBasis::default();
        let p = wavelet.padded_len(n);
        let (fixed, _) = known_basis_split(p, &wavelet, wavelet.levels)?;
        let m = self.a.nrows();
        let mut a = DMatrix::zeros(m + p - n, p);
        a.view_mut((0, 0), (m, n)).copy_from(&self.a);
        for k in 0..p - n {
            a[(m + k, n + k)] = 1.0;
        }
        Ok(KnownDomain {
            n,
            basis: SynthesisBasis::new(wavelet.synthesis_matrix(p)?)?,
            a,
            fixed,
        })
    }

    fn iht_known(&self) -> Result<Run> {
        let dom = self.known_domain()?;
        let free = dom.basis.dim() - dom.fixed.len();
        let mut run = self.sparsity_method(Method::G, free, |s, y| {
            let set = SparsitySet::TopS {
                s,
                fixed: dom.fixed.clone(),
            };
            let (beta, report) = iht_batch(&dom.pad(y), &dom.a, &dom.basis, &set, &self.solver)?;
            Ok((dom.synthesize(&beta), report))
        })?;
        run.hyperparameters
            .insert("fixed_coefficients".into(), dom.fixed.len() as f64);
        Ok(run)
    }

    fn lasso_known(&self) -> Result<Run> {
        let dom = self.known_domain()?;
        let mut mask = vec![true; dom.basis.dim()];
        for &k in &dom.fixed {
            mask[k] = false;
        }
        let mut run = self.lambda_method(Method::J, |l, y| {
            let (beta, report) = ista_lasso_batch(
                &dom.pad(y),
                &dom.a,
                &dom.basis,
                l,
                Some(&mask),
                &self.convex_solver(),
            )?;
            Ok((dom.synthesize(&beta), report))
        })?;
        run.hyperparameters
            .insert("fixed_coefficients".into(), dom.fixed.len() as f64);
        Ok(run)
    }
}

/// Coefficient domain of the known-basis methods. Signals of length `n`
/// are zero-padded to the basis length; the operator becomes
/// `blockdiag(A, I)` and observations get matching zero rows.
struct KnownDomain {
    n: usize,
    basis: SynthesisBasis,
    a: DMatrix<f64>,
    fixed: Vec<usize>,
}

impl KnownDomain {
    fn pad(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let extra = self.a.nrows() - y.ncols();
        if extra == 0 {
            return y.clone();
        }
        let mut out = DMatrix::zeros(y.nrows(), y.ncols() + extra);
        out.columns_mut(0, y.ncols()).copy_from(y);
        out
    }

    /// Signals (cropped to `n`) from coefficient rows.
    fn synthesize(&self, beta: &DMatrix<f64>) -> DMatrix<f64> {
        (beta * self.basis.matrix().transpose())
            .columns(0, self.n)
            .into_owned()
    }
}
