//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix with eigenvalues in descending order.
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sorted_eigen(sym: &DMatrix<f64>) -> SortedEigen {
    let sym = symmetrized(sym);
    let eig = SymmetricEigen::new(sym.clone());
    let finite = eig
        .eigenvalues
        .iter()
        .chain(eig.eigenvectors.iter())
        .all(|v| v.is_finite());
    let (raw_values, raw_vectors) = if (finite && orthogonality_defect(&eig.eigenvectors) < 1e-9)
        || !sym.iter().all(|v| v.is_finite())
    {
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        // nalgebra's QR iteration breaks down on some block-sparse inputs
        jacobi_eigen(sym)
    };
    let n = raw_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        raw_values[b]
            .partial_cmp(&raw_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| raw_values[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &raw_vectors.column(src));
    }
    SortedEigen { values, vectors }
}

/// Cyclic Jacobi rotations; slow but unconditionally stable.
fn jacobi_eigen(mut a: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off <= f64::EPSILON * f64::EPSILON * a.norm_squared() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry relative to the matrix scale.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

/// PSD check: Cholesky of `m + δI` with `δ = 1e-12·trace/n`.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if n == 0 {
        return true;
    }
    let trace = m.trace();
    if trace == 0.0 {
        return m.iter().all(|&v| v == 0.0);
    }
    if trace < 0.0 {
        return false;
    }
    let delta = 1e-12 * trace / n as f64;
    let shifted = symmetrized(m) + DMatrix::identity(n, n) * delta;
    Cholesky::new(shifted).is_some()
}

/// Factor `B` (n×r) with `B Bᵀ = m` for a PSD matrix, dropping eigenvalues
/// below `1e-12·λ_max`.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = sorted_eigen(m);
    let top = eig.values[0];
    if top <= 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let cutoff = 1e-12 * top;
    let rank = eig.values.iter().take_while(|&&v| v > cutoff).count();
    let mut factor = DMatrix::zeros(n, rank);
    for k in 0..rank {
        let scale = eig.values[k].sqrt();
        factor.set_column(k, &(eig.vectors.column(k) * scale));
    }
    factor
}

/// Numerical rank of a PSD matrix (eigenvalues above `1e-10·λ_max`).
pub fn psd_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let eig = sorted_eigen(m);
    let top = eig.values[0];
    if top <= 0.0 {
        return 0;
    }
    eig.values.iter().filter(|&&v| v > 1e-10 * top).count()
}

/// `S^{-1/2}` of an SPD matrix with eigenvalue floor `floor_rel·λ_max`.
pub fn inverse_sqrt_spd(m: &DMatrix<f64>, floor_rel: f64) -> DMatrix<f64> {
    let eig = sorted_eigen(m);
    let n = m.nrows();
    let floor = floor_rel * eig.values[0].max(0.0);
    let scales = DVector::from_iterator(n, eig.values.iter().map(|&v| 1.0 / v.max(floor).sqrt()));
    let scaled = DMatrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * scales[j]);
    symmetrized(&(scaled * eig.vectors.transpose()))
}

/// Strict Cholesky factorization; fails with `what` in the message.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrized(m)).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// `log det` from a Cholesky factor's diagonal.
pub fn log_det_from_lower(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Spectral norm of `op` (a linear map `R^cols → R^rows` with adjoint `adj`)
/// by power iteration on `adjᵀ∘op`.
pub fn spectral_norm_by<F, G>(cols: usize, iterations: usize, op: F, adj: G) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    if cols == 0 {
        return 0.0;
    }
    // deterministic start with no special structure
    let mut v = DVector::from_fn(cols, |i, _| {
        1.0 + 0.5 * ((i as f64 + 1.0) * 0.618_033_988_75).fract()
    });
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = adj(&op(&v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = norm;
        v = w / norm;
    }
    // Rayleigh quotient of the final iterate
    let av = op(&v);
    estimate.max(av.norm_squared()).sqrt()
}

pub fn spectral_norm(a: &DMatrix<f64>, iterations: usize) -> f64 {
    spectral_norm_by(a.ncols(), iterations, |v| a * v, |w| a.transpose() * w)
}

pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    (m.transpose() * m - DMatrix::<f64>::identity(n, n)).amax()
}

/// Row `j` of a row-major signal matrix as a column vector.
pub fn row_vector(m: &DMatrix<f64>, j: usize) -> DVector<f64> {
    m.row(j).transpose()
}

/// Stack column vectors as rows.
pub fn rows_to_matrix(rows: &[DVector<f64>], ncols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), ncols);
    for (j, r) in rows.iter().enumerate() {
        out.set_row(j, &r.transpose());
    }
    out
}

/// Empirical mean and covariance (divisor = count) of the given rows.
pub fn mean_and_covariance(x: &DMatrix<f64>, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.ncols();
    let count = rows.len() as f64;
    let mut mean = DVector::zeros(n);
    for &j in rows {
        mean += x.row(j).transpose();
    }
    mean /= count;
    let mut centered = DMatrix::zeros(rows.len(), n);
    for (k, &j) in rows.iter().enumerate() {
        centered.set_row(k, &(x.row(j) - mean.transpose()));
    }
    let cov = symmetrized(&(centered.transpose() * &centered)) / count;
    (mean, cov)
}
