//! Grid search on a held-out slice of the training set.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tuned<T> {
    pub best: T,
    pub score: f64,
    /// Every evaluated point and its score, in evaluation order.
    pub curve: Vec<(f64, f64)>,
}

fn pick<T: Copy + PartialOrd>(points: &[(T, f64)]) -> Option<(T, f64)> {
    let mut best: Option<(T, f64)> = None;
    for &(v, s) in points {
        if !s.is_finite() {
            continue;
        }
        best = match best {
            None => Some((v, s)),
            Some((bv, bs)) if s < bs || (s == bs && v < bv) => Some((v, s)),
            keep => keep,
        };
    }
    best
}

fn evaluate<T: Copy, F: FnMut(T) -> Result<f64>>(
    values: &[T],
    eval: &mut F,
    first_error: &mut Option<Error>,
) -> Vec<(T, f64)> {
    values
        .iter()
        .map(|&v| match eval(v) {
            Ok(s) => (v, s),
            Err(e) => {
                first_error.get_or_insert(e);
                (v, f64::INFINITY)
            }
        })
        .collect()
}

/// Minimizes `eval` over `grid`, then once more over `best·10^d` for each
/// offset `d` when the grid has more than one point. Ties go to the
/// smallest value; failed or non-finite evaluations never win.
pub fn tune_lambda<F>(grid: &[f64], refine_decades: &[f64], mut eval: F) -> Result<Tuned<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::Config("empty λ grid".into()));
    }
    let mut first_error = None;
    let mut points = evaluate(grid, &mut eval, &mut first_error);
    if grid.len() > 1 {
        if let Some((best, _)) = pick(&points) {
            if best > 0.0 {
                let extra: Vec<f64> = refine_decades
                    .iter()
                    .map(|d| best * 10f64.powf(*d))
                    .filter(|v| !points.iter().any(|(p, _)| p == v))
                    .collect();
                points.extend(evaluate(&extra, &mut eval, &mut first_error));
            }
        }
    }
    finish(points, first_error, |v| v)
}

/// Minimizes `eval` over a discrete grid; ties go to the smallest value.
pub fn tune_discrete<F>(grid: &[usize], mut eval: F) -> Result<Tuned<usize>>
where
    F: FnMut(usize) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    let mut first_error = None;
    let points = evaluate(grid, &mut eval, &mut first_error);
    finish(points, first_error, |v| v as f64)
}

fn finish<T: Copy + PartialOrd>(
    points: Vec<(T, f64)>,
    first_error: Option<Error>,
    as_f64: impl Fn(T) -> f64,
) -> Result<Tuned<T>> {
    let curve = points.iter().map(|&(v, s)| (as_f64(v), s)).collect();
    match pick(&points) {
        Some((best, score)) => Ok(Tuned { best, score, curve }),
        None => Err(first_error
            .unwrap_or_else(|| Error::Config("every grid point gave a non-finite score".into()))),
    }
}
