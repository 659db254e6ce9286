//! Brute-force posterior mean by tensor-grid quadrature, for small `n`.
//!
//! Each component is written `x = μ_i + B_i u` with `u ~ N(0, I_r)`, so a
//! degenerate covariance is integrated over its own support only. Rank-zero
//! components are point masses.

use nalgebra::{DMatrix, DVector};

use super::prepared::LOG_2PI;
use crate::error::{ensure_dim, Error, Result};
use crate::linalg;
use crate::model::{ForwardOperator, MixtureModel, NoiseModel};

/// Uniform grid on `[−half_width, half_width]^r` in whitened coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            points: 321,
        }
    }
}

impl GridSpec {
    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    /// Same extent, roughly half the step.
    pub fn refined(&self) -> Self {
        Self {
            half_width: self.half_width,
            points: 2 * self.points - 1,
        }
    }

    fn nodes(&self) -> Vec<(f64, f64)> {
        let h = self.step();
        (0..self.points)
            .map(|k| {
                let edge = k == 0 || k + 1 == self.points;
                (
                    -self.half_width + k as f64 * h,
                    if edge { 0.5 * h } else { h },
                )
            })
            .collect()
    }
}

/// Running `log Σ exp(a_k)` together with `Σ exp(a_k) x_k`.
struct LogSumExp {
    max: f64,
    mass: f64,
    moment: DVector<f64>,
}

impl LogSumExp {
    fn new(n: usize) -> Self {
        Self {
            max: f64::NEG_INFINITY,
            mass: 0.0,
            moment: DVector::zeros(n),
        }
    }

    fn push(&mut self, log_weight: f64, x: &DVector<f64>) {
        if log_weight > self.max {
            let scale = (self.max - log_weight).exp();
            self.mass *= scale;
            self.moment *= scale;
            self.max = log_weight;
        }
        let w = (log_weight - self.max).exp();
        self.mass += w;
        self.moment.axpy(w, x, 1.0);
    }
}

pub fn posterior_mean_oracle(
    model: &MixtureModel,
    operator: &ForwardOperator,
    noise: &NoiseModel,
    y: &DVector<f64>,
    grid: GridSpec,
) -> Result<DVector<f64>> {
    let n = model.dim();
    if n > 3 {
        return Err(Error::InvalidArgument(format!(
            "quadrature oracle supports n <= 3, got {n}"
        )));
    }
    if grid.points < 3 || !(grid.half_width > 0.0) {
        return Err(Error::InvalidArgument(
            "grid needs at least 3 points and a positive width".into(),
        ));
    }
    ensure_dim(n, operator.input_dim())?;
    let m = operator.output_dim();
    ensure_dim(m, y.len())?;
    let a = operator.matrix();
    let lower = noise.lower_factor(m)?;
    let log_noise_norm =
        -0.5 * m as f64 * LOG_2PI - lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let whiten = |v: DVector<f64>| {
        lower
            .solve_lower_triangular(&v)
            .expect("noise factor is invertible")
    };

    let nodes = grid.nodes();
    let h = grid.step();
    let mass_1d: f64 = nodes
        .iter()
        .map(|(u, w)| w * (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt())
        .sum();

    let mut acc = LogSumExp::new(n);
    for i in 0..model.components() {
        let wi = model.weights()[i];
        if wi == 0.0 {
            continue;
        }
        let mu = &model.means()[i];
        let b = linalg::psd_factor(&model.covariances()[i]);
        let r = b.ncols();
        let c0 = whiten(y - &a * mu);
        let base = wi.ln() + log_noise_norm;
        if r == 0 {
            acc.push(base - 0.5 * c0.norm_squared(), mu);
            continue;
        }
        if (mass_1d.powi(r as i32) - 1.0).abs() > 0.01 {
            return Err(Error::GridTooCoarse(format!(
                "prior mass on the grid is {:.4} for component {i}",
                mass_1d.powi(r as i32)
            )));
        }
        let p =
            DMatrix::from_columns(&(0..r).map(|k| whiten(&a * b.column(k))).collect::<Vec<_>>());
        let sharpness = linalg::spectral_norm(&p, 100);
        if h * sharpness > 1.0 {
            return Err(Error::GridTooCoarse(format!(
                "step {h:.3e} too wide for likelihood scale {:.3e} in component {i}",
                1.0 / sharpness
            )));
        }
        let mut index = vec![0usize; r];
        let mut u = DVector::zeros(r);
        loop {
            let mut log_w = base - 0.5 * r as f64 * LOG_2PI;
            for k in 0..r {
                let (uk, wk) = nodes[index[k]];
                u[k] = uk;
                log_w += wk.ln() - 0.5 * uk * uk;
            }
            let resid = &c0 - &p * &u;
            log_w -= 0.5 * resid.norm_squared();
            let x = mu + &b * &u;
            acc.push(log_w, &x);
            // odometer over the r-dimensional grid
            let mut k = 0;
            while k < r {
                index[k] += 1;
                if index[k] < grid.points {
                    break;
                }
                index[k] = 0;
                k += 1;
            }
            if k == r {
                break;
            }
        }
    }
    if !(acc.mass > 0.0) {
        return Err(Error::GridTooCoarse(
            "posterior mass vanished on the grid".into(),
        ));
    }
    Ok(acc.moment / acc.mass)
}
