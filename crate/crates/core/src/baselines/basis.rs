use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::unsupervised::group_indices;

const ORTHO_TOL: f64 = 1e-10;

/// Orthogonal synthesis matrix `M`: signals are `x = Mβ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisBasis {
    m: DMatrix<f64>,
}

impl SynthesisBasis {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidArgument(format!(
                "basis must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let defect = linalg::orthogonality_defect(&m);
        if defect > ORTHO_TOL * (m.nrows() as f64).max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "basis is not orthogonal (defect {defect:e})"
            )));
        }
        Ok(Self { m })
    }

    pub fn canonical(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

/// Per-group bases `M_i` and penalty matrices `K_i` acting on the group
/// coefficients `β_i`.
#[derive(Clone, Debug)]
pub struct GroupBases {
    pub bases: Vec<SynthesisBasis>,
    pub penalties: Vec<DMatrix<f64>>,
}

impl GroupBases {
    pub fn new(bases: Vec<SynthesisBasis>, penalties: Vec<DMatrix<f64>>) -> Result<Self> {
        if bases.is_empty() || bases.len() != penalties.len() {
            return Err(Error::InvalidArgument(format!(
                "{} bases but {} penalty matrices",
                bases.len(),
                penalties.len()
            )));
        }
        let n = bases[0].dim();
        for (b, k) in bases.iter().zip(&penalties) {
            if b.dim() != n || k.nrows() != n || k.ncols() != n {
                return Err(Error::InvalidArgument(
                    "group bases and penalties must share one dimension".into(),
                ));
            }
            if linalg::asymmetry(k) > 1e-10 * k.amax().max(1.0) {
                return Err(Error::InvalidArgument(
                    "penalty matrix is not symmetric".into(),
                ));
            }
        }
        Ok(Self { bases, penalties })
    }

    pub fn groups(&self) -> usize {
        self.bases.len()
    }

    pub fn dim(&self) -> usize {
        self.bases[0].dim()
    }

    /// `[M_1 | … | M_L]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n * self.groups());
        for (i, b) in self.bases.iter().enumerate() {
            out.columns_mut(i * n, n).copy_from(b.matrix());
        }
        out
    }
}

/// A subspace of coefficient space.
#[derive(Clone, Debug, PartialEq)]
pub enum Subspace {
    /// Span of the listed coordinate axes.
    Coordinates(Vec<usize>),
    /// Span of the orthonormal columns.
    Frame(DMatrix<f64>),
}

/// Constraint set of hard thresholding.
#[derive(Clone, Debug, PartialEq)]
pub enum SparsitySet {
    /// At most `s` nonzeros outside `fixed`; the `fixed` coordinates are
    /// never thresholded.
    TopS { s: usize, fixed: Vec<usize> },
    /// Union of the listed subspaces.
    Union(Vec<Subspace>),
}

impl SparsitySet {
    pub fn top_s(s: usize) -> Self {
        SparsitySet::TopS {
            s,
            fixed: Vec::new(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            SparsitySet::TopS { s, fixed } => {
                if *s > n || fixed.iter().any(|&i| i >= n) {
                    return Err(Error::InvalidArgument(format!(
                        "sparsity {s} or fixed indices exceed n = {n}"
                    )));
                }
            }
            SparsitySet::Union(parts) => {
                if parts.is_empty() {
                    return Err(Error::InvalidArgument("empty subspace union".into()));
                }
                for p in parts {
                    match p {
                        Subspace::Coordinates(idx) if idx.iter().any(|&i| i >= n) => {
                            return Err(Error::InvalidArgument(
                                "subspace index out of range".into(),
                            ));
                        }
                        Subspace::Frame(f)
                            if f.nrows() != n || linalg::orthogonality_defect(f) > 1e-8 =>
                        {
                            return Err(Error::InvalidArgument(
                                "frame must have n orthonormal rows".into(),
                            ));
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }
}

/// Dictionary with unit-norm columns and full column rank.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    d: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        if d.ncols() == 0 || d.ncols() > d.nrows() {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= d <= n, got {}x{}",
                d.nrows(),
                d.ncols()
            )));
        }
        for (j, col) in d.column_iter().enumerate() {
            if (col.norm() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "atom {j} has norm {}",
                    col.norm()
                )));
            }
        }
        let smallest = d.clone().svd(false, false).singular_values.min();
        if !(smallest > 1e-8) {
            return Err(Error::InvalidArgument(format!(
                "dictionary is not injective (σ_min = {smallest:e})"
            )));
        }
        Ok(Self { d })
    }

    /// Normalizes the columns without checking injectivity.
    pub(crate) fn from_columns_unchecked(mut d: DMatrix<f64>) -> Self {
        for mut col in d.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        Self { d }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn atoms(&self) -> usize {
        self.d.ncols()
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }
}

/// Each eigenvector's largest-magnitude entry is made positive (first on ties).
fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn covariance_eigen(x: &DMatrix<f64>, rows: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let (_, cov) = linalg::mean_and_covariance(x, rows);
    let eig = linalg::sorted_eigen(&cov);
    let mut vectors = eig.vectors;
    fix_signs(&mut vectors);
    (vectors, eig.values)
}

/// Eigenbasis of the empirical covariance of the rows of `x`, ordered by
/// decreasing eigenvalue.
pub fn svd_basis(x: &DMatrix<f64>) -> Result<SynthesisBasis> {
    if x.nrows() < 2 {
        return Err(Error::InvalidArgument(
            "svd basis needs at least 2 samples".into(),
        ));
    }
    let rows: Vec<usize> = (0..x.nrows()).collect();
    Ok(SynthesisBasis {
        m: covariance_eigen(x, &rows).0,
    })
}

/// Per-cluster covariance eigenbases.
#[derive(Clone, Debug)]
pub struct GroupSvd {
    /// Full bases and penalties `(Σ̂_i + εI)^{-1/2}` in coefficient
    /// coordinates, i.e. `diag((λ_k + ε)^{-1/2})`.
    pub bases: GroupBases,
    /// Leading `s` eigenvectors of each cluster.
    pub frames: SparsitySet,
    /// Clusters that had fewer than two samples and use the global basis.
    pub fallback_groups: Vec<usize>,
}

pub fn group_svd_bases(
    x: &DMatrix<f64>,
    labels: &[usize],
    clusters: usize,
    s: usize,
) -> Result<GroupSvd> {
    let n = x.ncols();
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!(
            "frame size {s} outside 1..={n}"
        )));
    }
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    let groups = group_indices(labels, clusters)?;
    let all: Vec<usize> = (0..x.nrows()).collect();
    let mut global: Option<(DMatrix<f64>, DVector<f64>)> = None;
    let mut bases = Vec::with_capacity(clusters);
    let mut penalties = Vec::with_capacity(clusters);
    let mut frames = Vec::with_capacity(clusters);
    let mut fallback_groups = Vec::new();
    for (c, rows) in groups.iter().enumerate() {
        let (vectors, values) = if rows.len() >= 2 {
            covariance_eigen(x, rows)
        } else {
            fallback_groups.push(c);
            global
                .get_or_insert_with(|| covariance_eigen(x, &all))
                .clone()
        };
        let trace: f64 = values.iter().map(|v| v.max(0.0)).sum();
        let eps = if trace > 0.0 {
            1e-8 * trace / n as f64
        } else {
            1e-8
        };
        penalties.push(DMatrix::from_diagonal(
            &values.map(|v| 1.0 / (v.max(0.0) + eps).sqrt()),
        ));
        frames.push(Subspace::Frame(vectors.columns(0, s).into_owned()));
        bases.push(SynthesisBasis { m: vectors });
    }
    Ok(GroupSvd {
        bases: GroupBases { bases, penalties },
        frames: SparsitySet::Union(frames),
        fallback_groups,
    })
}
