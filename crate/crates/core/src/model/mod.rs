//! Probabilistic model: mixtures, forward operators, noise, sampling.

mod mixture;
mod noise;
mod operator;

pub use mixture::MixtureModel;
pub use noise::NoiseModel;
pub use operator::{ForwardOperator, GaussianBlur};

use nalgebra::DMatrix;

use crate::error::Result;
use crate::rng::SeededRng;

/// Draws `count` signals (rows) and their component labels.
///
/// Each row picks `I ~ Categorical(w)` and sets `x = μ_I + B_I g` with `g`
/// standard normal, where `B_I` is the stored factor or an eigenfactor of `Σ_I`.
pub fn sample_mixture(
    model: &MixtureModel,
    rng: &mut SeededRng,
    count: usize,
) -> (DMatrix<f64>, Vec<usize>) {
    let factors = model.sampling_factors();
    let weights: Vec<f64> = model.weights().iter().copied().collect();
    let n = model.dim();
    let mut out = DMatrix::zeros(count, n);
    let mut labels = Vec::with_capacity(count);
    for j in 0..count {
        let i = rng.categorical(&weights);
        let b = &factors[i];
        let g = rng.normal_vector(b.ncols());
        let x = &model.means()[i] + b * g;
        out.set_row(j, &x.transpose());
        labels.push(i);
    }
    (out, labels)
}

/// `count` iid noise draws of dimension `m`, one per row.
pub fn sample_noise(
    noise: &NoiseModel,
    m: usize,
    rng: &mut SeededRng,
    count: usize,
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(count, m);
    for j in 0..count {
        out.set_row(j, &noise.draw(m, rng)?.transpose());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use nalgebra::DVector;

    #[test]
    fn point_mass_samples_are_constant() {
        let model = MixtureModel::new(
            DVector::from_vec(vec![1.0]),
            vec![DVector::from_vec(vec![3.0, -1.0])],
            vec![DMatrix::zeros(2, 2)],
        )
        .unwrap();
        let (x, _) = sample_mixture(&model, &mut SeededRng::new(1), 50);
        for j in 0..50 {
            assert_eq!(x[(j, 0)], 3.0);
            assert_eq!(x[(j, 1)], -1.0);
        }
    }

    #[test]
    fn zero_weight_component_never_drawn() {
        let model = MixtureModel::new(
            DVector::from_vec(vec![1.0, 0.0]),
            vec![DVector::zeros(1); 2],
            vec![DMatrix::identity(1, 1); 2],
        )
        .unwrap();
        let (_, labels) = sample_mixture(&model, &mut SeededRng::new(5), 1000);
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn label_frequencies_follow_weights() {
        let model = MixtureModel::new(
            DVector::from_vec(vec![0.3, 0.7]),
            vec![DVector::zeros(1); 2],
            vec![DMatrix::identity(1, 1); 2],
        )
        .unwrap();
        let (_, labels) = sample_mixture(&model, &mut SeededRng::new(11), 100_000);
        let freq = labels.iter().filter(|&&l| l == 0).count() as f64 / 1e5;
        assert!((freq - 0.3).abs() < 0.01, "{freq}");
    }

    #[test]
    fn coordinate_mixture_samples_are_sparse() {
        let mut rng = SeededRng::new(3);
        let supports: Vec<Vec<usize>> = (0..4).map(|_| rng.subset(10, 3)).collect();
        let model = MixtureModel::from_coordinate_supports(10, 3, &supports).unwrap();
        let (x, _) = sample_mixture(&model, &mut rng, 10_000);
        for j in 0..x.nrows() {
            assert!(x.row(j).iter().filter(|v| **v != 0.0).count() <= 3);
        }
    }

    #[test]
    fn samples_lie_in_component_affine_subspace() {
        let b = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.5, 1.0, 0.0, -1.0, 2.0, 0.3]);
        let cov = &b * b.transpose();
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0]);
        let model = MixtureModel::new(
            DVector::from_vec(vec![1.0]),
            vec![mu.clone()],
            vec![cov.clone()],
        )
        .unwrap();
        let (x, _) = sample_mixture(&model, &mut SeededRng::new(8), 200);
        let basis = linalg::psd_factor(&cov);
        let q = basis.clone().qr().q();
        for j in 0..200 {
            let d = linalg::row_vector(&x, j) - &mu;
            let resid = &d - &q * (q.transpose() * &d);
            assert!(resid.norm() < 1e-10);
        }
    }

    #[test]
    fn component_moments_match_within_three_standard_errors() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
        let cov = &b * b.transpose();
        let mu = DVector::from_vec(vec![0.5, -1.0]);
        let model = MixtureModel::new(
            DVector::from_vec(vec![1.0]),
            vec![mu.clone()],
            vec![cov.clone()],
        )
        .unwrap();
        let count = 100_000;
        let (x, _) = sample_mixture(&model, &mut SeededRng::new(21), count);
        let rows: Vec<usize> = (0..count).collect();
        let (m, c) = linalg::mean_and_covariance(&x, &rows);
        for k in 0..2 {
            let se = (cov[(k, k)] / count as f64).sqrt();
            assert!((m[k] - mu[k]).abs() < 3.0 * se);
            for l in 0..2 {
                // var of a product of jointly Gaussian coordinates: Σkk Σll + Σkl²
                let se = ((cov[(k, k)] * cov[(l, l)] + cov[(k, l)].powi(2)) / count as f64).sqrt();
                assert!((c[(k, l)] - cov[(k, l)]).abs() < 3.0 * se);
            }
        }
    }

    #[test]
    fn zero_sigma_noise_is_rejected() {
        assert!(NoiseModel::iso(0.0).is_err());
        assert!(NoiseModel::full(DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn iso_noise_mean_is_near_zero() {
        let noise = NoiseModel::iso(1.0).unwrap();
        let e = sample_noise(&noise, 3, &mut SeededRng::new(4), 100_000).unwrap();
        for k in 0..3 {
            assert!(e.column(k).mean().abs() < 0.02);
        }
    }

    #[test]
    fn full_noise_variances_match() {
        let noise =
            NoiseModel::full(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]))).unwrap();
        let e = sample_noise(&noise, 2, &mut SeededRng::new(6), 100_000).unwrap();
        let v0 = e.column(0).map(|v| v * v).mean();
        let v1 = e.column(1).map(|v| v * v).mean();
        assert!((v0 - 1.0).abs() < 0.05);
        assert!((v1 - 4.0).abs() < 0.2);
    }
}
