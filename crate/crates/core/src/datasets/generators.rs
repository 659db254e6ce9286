//! Signal generators for the three benchmark families.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Signals (one per row) and 0-based component labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSignals {
    pub signals: DMatrix<f64>,
    pub labels: Vec<usize>,
}

fn collect_rows(n: usize, rows: Vec<(DVector<f64>, usize)>) -> LabeledSignals {
    let mut signals = DMatrix::zeros(rows.len(), n);
    let mut labels = Vec::with_capacity(rows.len());
    for (j, (x, label)) in rows.into_iter().enumerate() {
        signals.set_row(j, &x.transpose());
        labels.push(label);
    }
    LabeledSignals { signals, labels }
}

/// Draws `components` random coordinate supports of size `s`; different
/// supports may overlap.
pub fn gmm_supports(
    n: usize,
    s: usize,
    components: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<usize>>> {
    if s > n || s == 0 || components == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= s <= n and L >= 1 (s = {s}, n = {n}, L = {components})"
        )));
    }
    Ok((0..components).map(|_| rng.subset(n, s)).collect())
}

/// Samples from the uniform mixture of standard Gaussians on the given
/// coordinate supports. Row `j` uses the stream `rng.derive(j)`.
pub fn gen_dataset1(
    n: usize,
    supports: &[Vec<usize>],
    count: usize,
    rng: &SeededRng,
) -> Result<LabeledSignals> {
    if supports.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one support is required".into(),
        ));
    }
    if let Some(&k) = supports.iter().flatten().find(|&&k| k >= n) {
        return Err(Error::InvalidArgument(format!(
            "support index {k} out of range 0..{n}"
        )));
    }
    let l = supports.len();
    let rows = (0..count)
        .into_par_iter()
        .map(|j| {
            let mut r = rng.derive(j as u64);
            let label = r.index(l);
            let mut x = DVector::zeros(n);
            for &k in &supports[label] {
                x[k] = r.normal();
            }
            (x, label)
        })
        .collect();
    Ok(collect_rows(n, rows))
}

/// Grid `τ_k = 4πk/(n−1)`, `k = 0..n`.
pub fn time_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|k| 4.0 * PI * k as f64 / (n - 1) as f64)
        .collect()
}

/// `count` equispaced interior jump locations in `(0, 4π)`.
pub fn jump_locations(count: usize) -> Vec<f64> {
    (1..=count)
        .map(|i| 4.0 * PI * i as f64 / (count + 1) as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinusoidParams {
    pub amplitude: f64,
    pub omega: f64,
    pub offset: f64,
    pub jump: f64,
    /// Index into [`jump_locations`].
    pub location: usize,
}

impl SinusoidParams {
    pub fn draw(rng: &mut SeededRng, jumps: usize) -> Self {
        Self {
            amplitude: rng.uniform_range(0.05, 0.1),
            omega: rng.uniform_range(1.0, 2.0),
            offset: rng.uniform_range(0.5, 3.0),
            jump: 0.2 * rng.normal(),
            location: rng.index(jumps),
        }
    }
}

/// `A sin(ωτ) + B`, plus `C` for `τ > τ_i`.
pub fn sinusoid_signal(n: usize, jumps: usize, p: &SinusoidParams) -> DVector<f64> {
    let tau_i = jump_locations(jumps)[p.location];
    let grid = time_grid(n);
    DVector::from_fn(n, |k, _| {
        let t = grid[k];
        let smooth = p.amplitude * (p.omega * t).sin() + p.offset;
        if t > tau_i {
            smooth + p.jump
        } else {
            smooth
        }
    })
}

/// Sinusoids with one discontinuity; the label is the jump location index.
pub fn gen_dataset2(
    n: usize,
    jumps: usize,
    count: usize,
    rng: &SeededRng,
) -> Result<LabeledSignals> {
    if n == 0 || jumps == 0 {
        return Err(Error::InvalidArgument(
            "n and the jump count must be positive".into(),
        ));
    }
    let rows = (0..count)
        .into_par_iter()
        .map(|j| {
            let p = SinusoidParams::draw(&mut rng.derive(j as u64), jumps);
            (sinusoid_signal(n, jumps, &p), p.location)
        })
        .collect();
    Ok(collect_rows(n, rows))
}

/// Jump-location pairs `(i, j)`, `i ≤ j`, in lexicographic order; the
/// position in this list is the label. `i = j` means a single jump.
pub fn fourier_configurations(jumps: usize) -> Vec<(usize, usize)> {
    (0..jumps)
        .flat_map(|i| (i..jumps).map(move |j| (i, j)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierParams {
    pub cos: [f64; 4],
    pub sin: [f64; 4],
    pub jumps: [f64; 2],
    pub locations: (usize, usize),
}

impl FourierParams {
    pub fn draw(rng: &mut SeededRng, config: (usize, usize)) -> Self {
        let cos = std::array::from_fn(|_| 0.1 + 0.1 * rng.normal());
        let sin = std::array::from_fn(|_| 0.1 + 0.1 * rng.normal());
        let jumps = [0.2 * rng.normal(), 0.2 * rng.normal()];
        Self {
            cos,
            sin,
            jumps,
            locations: config,
        }
    }
}

/// Truncated Fourier series shifted by `C₁` on `(τ(1), τ(2)]` and by `C₂`
/// after `τ(2)`; the shifts are absolute, not cumulative.
pub fn fourier_signal(n: usize, jumps: usize, p: &FourierParams) -> DVector<f64> {
    let loc = jump_locations(jumps);
    let (t1, t2) = (loc[p.locations.0], loc[p.locations.1]);
    let grid = time_grid(n);
    DVector::from_fn(n, |k, _| {
        let t = grid[k];
        let smooth: f64 = (0..4)
            .map(|d| {
                let w = 2.0 * PI * (d + 1) as f64 * t;
                p.cos[d] * w.cos() + p.sin[d] * w.sin()
            })
            .sum();
        if t > t2 {
            smooth + p.jumps[1]
        } else if t > t1 {
            smooth + p.jumps[0]
        } else {
            smooth
        }
    })
}

/// Fourier series with one or two discontinuities; the label indexes
/// [`fourier_configurations`].
pub fn gen_dataset3(
    n: usize,
    jumps: usize,
    count: usize,
    rng: &SeededRng,
) -> Result<LabeledSignals> {
    if n == 0 || jumps == 0 {
        return Err(Error::InvalidArgument(
            "n and the jump count must be positive".into(),
        ));
    }
    let configs = fourier_configurations(jumps);
    let rows = (0..count)
        .into_par_iter()
        .map(|j| {
            let mut r = rng.derive(j as u64);
            let label = r.index(configs.len());
            let p = FourierParams::draw(&mut r, configs[label]);
            (fourier_signal(n, jumps, &p), label)
        })
        .collect();
    Ok(collect_rows(n, rows))
}
