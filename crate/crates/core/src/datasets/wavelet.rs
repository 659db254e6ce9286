//! Periodic orthogonal Daubechies-6 transform (Mallat pyramid).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Daubechies lowpass reconstruction filter with 6 vanishing moments.
pub const DB6_LOWPASS: [f64; 12] = [
    0.111_540_743_350_109_47,
    0.494_623_890_398_453_06,
    0.751_133_908_021_095_4,
    0.315_250_351_709_197_63,
    -0.226_264_693_965_439_83,
    -0.129_766_867_567_261_94,
    0.097_501_605_587_323_04,
    0.027_522_865_530_305_727,
    -0.031_582_039_317_486_03,
    0.000_553_842_201_161_496_1,
    0.004_777_257_510_945_511,
    -0.001_077_301_085_308_479_6,
];

/// Default decomposition depth.
pub const DEFAULT_LEVELS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveletBasis {
    pub family: String,
    pub vanishing_moments: usize,
    pub levels: usize,
    pub boundary: String,
}

impl Default for WaveletBasis {
    fn default() -> Self {
        Self::db6(DEFAULT_LEVELS)
    }
}

fn highpass() -> [f64; 12] {
    let h = DB6_LOWPASS;
    let taps = h.len();
    std::array::from_fn(|k| {
        if k % 2 == 0 {
            h[taps - 1 - k]
        } else {
            -h[taps - 1 - k]
        }
    })
}

impl WaveletBasis {
    pub fn db6(levels: usize) -> Self {
        Self {
            family: "daubechies".into(),
            vanishing_moments: 6,
            levels,
            boundary: "periodic".into(),
        }
    }

    pub fn lowpass(&self) -> [f64; 12] {
        DB6_LOWPASS
    }

    /// `g_k = (−1)^k h_{11−k}`.
    pub fn highpass(&self) -> [f64; 12] {
        highpass()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.levels == 0 {
            return Ok(());
        }
        let block = 1usize << self.levels;
        if n == 0 || !n.is_multiple_of(block) {
            return Err(Error::InvalidArgument(format!(
                "length {n} is not divisible by 2^{} = {block}",
                self.levels
            )));
        }
        Ok(())
    }

    /// Length of the approximation block, `n / 2^levels`.
    pub fn approx_len(&self, n: usize) -> usize {
        n >> self.levels
    }

    /// Smallest multiple of `2^levels` that is at least `n`.
    pub fn padded_len(&self, n: usize) -> usize {
        let block = 1usize << self.levels;
        n.div_ceil(block) * block
    }

    /// Coefficients laid out as `[approx | detail L | … | detail 1]`.
    pub fn dwt(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x.len())?;
        let mut out = x.clone();
        let (h, g) = (DB6_LOWPASS, highpass());
        let mut len = x.len();
        let mut scratch = vec![0.0; len];
        for _ in 0..self.levels {
            let half = len / 2;
            let src = &out.as_slice()[..len];
            for k in 0..half {
                let (mut a, mut d) = (0.0, 0.0);
                for j in 0..h.len() {
                    let v = src[(2 * k + j) % len];
                    a += h[j] * v;
                    d += g[j] * v;
                }
                scratch[k] = a;
                scratch[half + k] = d;
            }
            out.as_mut_slice()[..len].copy_from_slice(&scratch[..len]);
            len = half;
        }
        Ok(out)
    }

    pub fn idwt(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(c.len())?;
        let mut out = c.clone();
        let (h, g) = (DB6_LOWPASS, highpass());
        let mut len = self.approx_len(c.len()) * 2;
        let mut scratch = vec![0.0; c.len()];
        for _ in 0..self.levels {
            let half = len / 2;
            scratch[..len].fill(0.0);
            let src = &out.as_slice()[..len];
            for k in 0..half {
                let (a, d) = (src[k], src[half + k]);
                for j in 0..h.len() {
                    scratch[(2 * k + j) % len] += h[j] * a + g[j] * d;
                }
            }
            out.as_mut_slice()[..len].copy_from_slice(&scratch[..len]);
            len *= 2;
        }
        Ok(out)
    }

    /// Synthesis matrix `W` with `x = Wc`, built column by column.
    pub fn synthesis_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        self.check(n)?;
        let mut w = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for k in 0..n {
            e[k] = 1.0;
            w.set_column(k, &self.idwt(&e)?);
            e[k] = 0.0;
        }
        Ok(w)
    }
}

/// Index partition `(fixed, sparse)` of a length-`n` coefficient vector.
///
/// The finest `sparse_levels` detail bands are sparse and everything coarser
/// is fixed; `sparse_levels = levels` leaves only the approximation fixed and
/// `0` makes every coefficient sparse.
pub fn known_basis_split(
    n: usize,
    basis: &WaveletBasis,
    sparse_levels: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if sparse_levels > basis.levels {
        return Err(Error::InvalidArgument(format!(
            "{sparse_levels} sparse levels requested, basis has {}",
            basis.levels
        )));
    }
    basis.check(n)?;
    let cut = if sparse_levels == 0 {
        0
    } else {
        n >> sparse_levels
    };
    Ok(((0..cut).collect(), (cut..n).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::rng::SeededRng;

    #[test]
    fn filter_identities() {
        let h = DB6_LOWPASS;
        assert!((h.iter().sum::<f64>() - 2f64.sqrt()).abs() < 1e-10);
        assert!((h.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-10);
        // double-shift orthogonality
        for shift in 1..6 {
            let dot: f64 = (0..12 - 2 * shift).map(|k| h[k] * h[k + 2 * shift]).sum();
            assert!(dot.abs() < 1e-10, "shift {shift}: {dot}");
        }
        let g = highpass();
        assert!(g.iter().sum::<f64>().abs() < 1e-10);
        // six vanishing moments
        for p in 0..6 {
            let moment: f64 = g
                .iter()
                .enumerate()
                .map(|(k, v)| v * (k as f64).powi(p))
                .sum();
            assert!(moment.abs() < 1e-9 * 12f64.powi(p), "moment {p}: {moment}");
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let b = WaveletBasis::default();
        assert_eq!(b.dwt(&DVector::zeros(64)).unwrap(), DVector::zeros(64));
    }

    #[test]
    fn round_trip_and_norm() {
        let b = WaveletBasis::default();
        let mut rng = SeededRng::new(1);
        for _ in 0..20 {
            let x = rng.normal_vector(256);
            let c = b.dwt(&x).unwrap();
            assert!((c.norm() - x.norm()).abs() < 1e-10);
            assert!((b.idwt(&c).unwrap() - &x).amax() < 1e-10);
            assert!((b.dwt(&b.idwt(&x).unwrap()).unwrap() - &x).amax() < 1e-10);
        }
    }

    #[test]
    fn synthesis_matrix_is_orthogonal() {
        let b = WaveletBasis::db6(3);
        let w = b.synthesis_matrix(64).unwrap();
        assert!(linalg::orthogonality_defect(&w) < 1e-8);
        let mut e = DVector::zeros(64);
        e[17] = 1.0;
        assert!((b.idwt(&e).unwrap().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn every_level_inverts_separately() {
        let mut rng = SeededRng::new(2);
        let x = rng.normal_vector(128);
        for levels in 0..=5 {
            let b = WaveletBasis::db6(levels);
            assert!((b.idwt(&b.dwt(&x).unwrap()).unwrap() - &x).amax() < 1e-10);
        }
    }

    #[test]
    fn polynomials_have_no_fine_detail() {
        // a smooth periodic signal has negligible finest-scale details
        let n = 256;
        let x = DVector::from_fn(n, |k, _| {
            (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin()
        });
        let c = WaveletBasis::db6(1).dwt(&x).unwrap();
        assert!(c.rows(n / 2, n / 2).amax() < 1e-8);
    }

    #[test]
    fn divisibility_is_checked() {
        assert!(WaveletBasis::default().dwt(&DVector::zeros(1000)).is_err());
        assert_eq!(WaveletBasis::default().padded_len(1000), 1024);
        assert_eq!(WaveletBasis::default().padded_len(256), 256);
    }

    #[test]
    fn split_cases() {
        let b = WaveletBasis::default();
        let (fixed, sparse) = known_basis_split(1024, &b, 5).unwrap();
        assert_eq!(fixed, (0..32).collect::<Vec<_>>());
        assert_eq!(sparse.len(), 992);
        let (fixed, sparse) = known_basis_split(1024, &b, 0).unwrap();
        assert!(fixed.is_empty());
        assert_eq!(sparse.len(), 1024);
        let (fixed, sparse) = known_basis_split(1024, &b, 2).unwrap();
        let mut all: Vec<usize> = fixed.iter().chain(&sparse).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1024).collect::<Vec<_>>());
        assert_eq!(fixed.len(), 256);
        assert!(known_basis_split(1024, &b, 6).is_err());
    }
}
