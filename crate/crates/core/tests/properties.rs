use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use gmsparse_core::baselines::{
    ista_lasso, lasso_objective, project_sparse, prox_weighted_l2, soft_threshold, SolverConfig,
    SparsitySet, SynthesisBasis,
};
use gmsparse_core::datasets::WaveletBasis;
use gmsparse_core::estimator::estimate_attention;
use gmsparse_core::unsupervised::{subspace_cluster, ClusteringConfig};
use gmsparse_core::{
    sample_mixture, ForwardOperator, MixtureModel, NoiseModel, PreparedEstimator, SeededRng,
};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 32,
        ..ProptestConfig::default()
    }
}

/// Random mixture with ranks in `0..=n`, all drawn from `seed`.
fn mixture(seed: u64, n: usize, components: usize) -> MixtureModel {
    let mut rng = SeededRng::new(seed);
    let w = DVector::from_fn(components, |_, _| 0.1 + rng.uniform());
    let w = &w / w.sum();
    let means = (0..components).map(|_| rng.normal_vector(n)).collect();
    let factors = (0..components)
        .map(|_| {
            let r = rng.index(n + 1);
            DMatrix::from_fn(n, r, |_, _| rng.normal())
        })
        .collect();
    MixtureModel::from_factors(w, means, factors).unwrap()
}

fn prepared(seed: u64, n: usize, m: usize, components: usize, sigma: f64) -> PreparedEstimator {
    let model = mixture(seed, n, components);
    let mut rng = SeededRng::with_stream(seed, 1);
    let a = DMatrix::from_fn(m, n, |_, _| rng.normal());
    PreparedEstimator::new(
        &model,
        &ForwardOperator::dense(a),
        &NoiseModel::iso(sigma).unwrap(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn responsibilities_stay_on_the_simplex(seed in any::<u64>(), magnitude in -3.0f64..6.0, l in 1usize..5) {
        let prep = prepared(seed, 3, 3, l, 0.3);
        let mut rng = SeededRng::with_stream(seed, 2);
        let y = rng.normal_vector(3).normalize() * 10f64.powf(magnitude);
        let w = prep.responsibilities(&y).unwrap();
        let w = w.as_slice();
        prop_assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(prep.estimate(&y).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn attention_form_agrees(seed in any::<u64>(), l in 1usize..5, sigma in 0.05f64..2.0) {
        let prep = prepared(seed, 4, 3, l, sigma);
        let y = SeededRng::with_stream(seed, 3).normal_vector(3) * 3.0;
        let a = estimate_attention(&prep, &y).unwrap();
        let b = prep.estimate(&y).unwrap();
        prop_assert!((&a - &b).norm() <= 1e-8 * b.norm().max(1e-12));
    }

    #[test]
    fn single_component_is_the_wiener_filter(seed in any::<u64>(), sigma in 0.05f64..2.0) {
        let prep = prepared(seed, 3, 2, 1, sigma);
        let model = prep.model();
        let (mu, s) = (&model.means()[0], &model.covariances()[0]);
        let a = prep.matrix();
        let y = SeededRng::with_stream(seed, 4).normal_vector(2);
        let gram = a * s * a.transpose() + DMatrix::identity(2, 2) * (sigma * sigma);
        let wiener = mu + s * a.transpose() * gram.lu().solve(&(&y - a * mu)).unwrap();
        let est = prep.estimate(&y).unwrap();
        prop_assert!((&est - &wiener).amax() < 1e-10 * wiener.amax().max(1.0));
    }

    #[test]
    fn estimator_is_locally_lipschitz(seed in any::<u64>(), l in 1usize..4) {
        let prep = prepared(seed, 3, 3, l, 0.5);
        let mut rng = SeededRng::with_stream(seed, 5);
        let y = rng.normal_vector(3) * 2.0;
        let base = prep.estimate(&y).unwrap();
        for scale in [1e-3, 1e-5, 1e-7] {
            let d = rng.normal_vector(3).normalize() * scale;
            let moved = prep.estimate(&(&y + &d)).unwrap();
            prop_assert!((moved - &base).norm() <= 1e3 * scale);
        }
    }

    #[test]
    fn samples_lie_in_their_affine_support(seed in any::<u64>(), l in 1usize..4) {
        let model = mixture(seed, 5, l);
        let mut rng = SeededRng::with_stream(seed, 6);
        let (x, labels) = sample_mixture(&model, &mut rng, 20);
        for (j, &i) in labels.iter().enumerate() {
            let f = &model.sampling_factors()[i];
            let centered = x.row(j).transpose() - &model.means()[i];
            let dist = if f.ncols() == 0 {
                centered.norm()
            } else {
                let coef = f.clone().svd(true, true).solve(&centered, 1e-12).unwrap();
                (centered - f * coef).norm()
            };
            prop_assert!(dist < 1e-10, "distance {dist}");
        }
    }

    #[test]
    fn blur_matrix_is_circulant(n in 8usize..40, sigma in 0.3f64..4.0) {
        let a = ForwardOperator::gaussian_blur(n, sigma).unwrap().matrix();
        for k in 0..n {
            for c in 0..n {
                prop_assert_eq!(a[(k, c)], a[(0, (c + n - k) % n)]);
            }
        }
    }

    #[test]
    fn top_s_projection_is_the_best_s_sparse_point(v in prop::collection::vec(-5.0f64..5.0, 1..9), s in 1usize..9) {
        let n = v.len();
        let s = s.min(n);
        let b = DVector::from_vec(v);
        let p = project_sparse(&b, &SparsitySet::top_s(s)).unwrap();
        let got = (&b - &p).norm_squared();
        let best = (0u32..1 << n)
            .filter(|mask| mask.count_ones() as usize == s)
            .map(|mask| (0..n).filter(|i| mask & (1 << i) == 0).map(|i| b[i] * b[i]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((got - best).abs() < 1e-12);
        prop_assert!(p.iter().filter(|x| **x != 0.0).count() <= s);
    }

    #[test]
    fn soft_threshold_is_the_l1_prox(v in prop::collection::vec(-5.0f64..5.0, 1..10), lambda in 0.0f64..3.0) {
        let z = DVector::from_vec(v);
        let p = soft_threshold(&z, lambda);
        let f = |x: &DVector<f64>| 0.5 * (x - &z).norm_squared() + lambda * x.lp_norm(1);
        let mut rng = SeededRng::new(z.len() as u64);
        for _ in 0..20 {
            let q = &p + rng.normal_vector(z.len()) * 0.1;
            prop_assert!(f(&p) <= f(&q) + 1e-12);
        }
    }

    #[test]
    fn weighted_prox_is_nonexpansive(seed in any::<u64>(), tau in 0.01f64..2.0) {
        let mut rng = SeededRng::new(seed);
        let b = DMatrix::from_fn(4, 4, |_, _| rng.normal());
        let k = &b * b.transpose() + DMatrix::identity(4, 4) * 0.1;
        let (u, v) = (rng.normal_vector(4) * 2.0, rng.normal_vector(4) * 2.0);
        let pu = prox_weighted_l2(&u, &k, tau).unwrap();
        let pv = prox_weighted_l2(&v, &k, tau).unwrap();
        prop_assert!((pu - pv).norm() <= (u - v).norm() + 1e-9);
    }

    #[test]
    fn ista_objective_never_increases(seed in any::<u64>(), lambda in 0.01f64..1.0) {
        let mut rng = SeededRng::new(seed);
        let a = DMatrix::from_fn(5, 6, |_, _| rng.normal());
        let y = rng.normal_vector(5);
        let basis = SynthesisBasis::canonical(6);
        let mut last = f64::INFINITY;
        for iters in 1..25 {
            let cfg = SolverConfig { max_iters: iters, tol: 0.0, ..SolverConfig::default() };
            let (beta, _) = ista_lasso(&y, &a, &basis, lambda, &cfg).unwrap();
            let obj = lasso_objective(&a, &y, &beta, lambda);
            prop_assert!(obj <= last + 1e-12);
            last = obj;
        }
    }

    #[test]
    fn wavelet_round_trip(seed in any::<u64>(), levels in 1usize..6, blocks in 1usize..5) {
        let w = WaveletBasis::db6(levels);
        let n = blocks << levels.max(4);
        let x = SeededRng::new(seed).normal_vector(n);
        let c = w.dwt(&x).unwrap();
        prop_assert!((w.idwt(&c).unwrap() - &x).amax() < 1e-10);
        prop_assert!((c.norm() - x.norm()).abs() < 1e-10 * x.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn clustering_is_permutation_covariant(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let mut x = DMatrix::zeros(60, 4);
        for j in 0..60 {
            let t = rng.normal();
            x[(j, (j % 2) * 2)] = t;
            x[(j, (j % 2) * 2 + 1)] = 0.5 * t + 0.01 * rng.normal();
        }
        let mut perm: Vec<usize> = (0..60).collect();
        rng.shuffle(&mut perm);
        let shuffled = x.select_rows(&perm);
        let cfg = ClusteringConfig::with_clusters(2, 11);
        let a = subspace_cluster(&x, &cfg).unwrap().labels;
        let b = subspace_cluster(&shuffled, &cfg).unwrap().labels;
        // same partition up to renaming
        for (i, &pi) in perm.iter().enumerate() {
            for (k, &pk) in perm.iter().enumerate() {
                prop_assert_eq!(b[i] == b[k], a[pi] == a[pk]);
            }
        }
    }
}
