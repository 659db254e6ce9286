use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// One center per row.
    pub centers: DMatrix<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

const MAX_ITERS: usize = 300;

fn sq_dist(x: &DMatrix<f64>, j: usize, c: &DMatrix<f64>, k: usize) -> f64 {
    let mut d = 0.0;
    for col in 0..x.ncols() {
        let t = x[(j, col)] - c[(k, col)];
        d += t * t;
    }
    d
}

fn nearest(x: &DMatrix<f64>, j: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for k in 0..centers.nrows() {
        let d = sq_dist(x, j, centers, k);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding: each new center is drawn with probability
/// proportional to the squared distance to the closest chosen one.
fn seed_centers(x: &DMatrix<f64>, k: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let (count, p) = x.shape();
    let mut centers = DMatrix::zeros(k, p);
    centers.set_row(0, &x.row(rng.index(count)));
    let mut dist: Vec<f64> = (0..count).map(|j| sq_dist(x, j, &centers, 0)).collect();
    for c in 1..k {
        let pick = if dist.iter().any(|&d| d > 0.0) {
            rng.categorical(&dist)
        } else {
            rng.index(count)
        };
        centers.set_row(c, &x.row(pick));
        for (j, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(x, j, &centers, c));
        }
    }
    centers
}

fn lloyd(x: &DMatrix<f64>, mut centers: DMatrix<f64>) -> KMeansResult {
    let (count, p) = x.shape();
    let k = centers.nrows();
    let mut labels = vec![usize::MAX; count];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; count];
        for j in 0..count {
            let (best, d) = nearest(x, j, &centers);
            dists[j] = d;
            if labels[j] != best {
                labels[j] = best;
                changed = true;
            }
        }
        let mut sums = DMatrix::zeros(k, p);
        let mut sizes = vec![0usize; k];
        for j in 0..count {
            let mut row = sums.row_mut(labels[j]);
            row += x.row(j);
            sizes[labels[j]] += 1;
        }
        for c in 0..k {
            if sizes[c] == 0 {
                // re-seed an empty cluster with the worst-fitting point
                let far = (0..count)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("at least one sample");
                centers.set_row(c, &x.row(far));
                dists[far] = 0.0;
                changed = true;
            } else {
                centers.set_row(c, &(sums.row(c) / sizes[c] as f64));
            }
        }
        if !changed || iterations >= MAX_ITERS {
            break;
        }
    }
    let inertia = (0..count).map(|j| sq_dist(x, j, &centers, labels[j])).sum();
    KMeansResult {
        labels,
        centers,
        inertia,
        iterations,
    }
}

/// k-means on the rows of `x` with k-means++ restarts; the run with the
/// lowest inertia wins (earliest on ties).
pub fn kmeans(
    x: &DMatrix<f64>,
    k: usize,
    restarts: usize,
    rng: &SeededRng,
) -> Result<KMeansResult> {
    if k == 0 || x.nrows() < k {
        return Err(Error::InvalidArgument(format!(
            "k-means needs 1 <= k <= N, got k = {k}, N = {}",
            x.nrows()
        )));
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..restarts.max(1) {
        let mut r = rng.derive(restart as u64);
        let run = lloyd(x, seed_centers(x, k, &mut r));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Fraction of agreeing labels under the best one-to-one relabeling.
/// Exhaustive over permutations for `k ≤ 8`, greedy on the confusion
/// matrix beyond that.
pub fn clustering_accuracy(truth: &[usize], predicted: &[usize]) -> f64 {
    assert_eq!(truth.len(), predicted.len());
    if truth.is_empty() {
        return 1.0;
    }
    let kt = truth.iter().max().unwrap() + 1;
    let kp = predicted.iter().max().unwrap() + 1;
    let k = kt.max(kp);
    let mut conf = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        conf[p][t] += 1;
    }
    let matched = if k <= 8 {
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = 0;
        permute(&mut perm, 0, &conf, &mut best);
        best
    } else {
        let mut used_p = vec![false; k];
        let mut used_t = vec![false; k];
        let mut total = 0;
        for _ in 0..k {
            let mut pick = (0, 0, 0);
            let mut found = false;
            for p in 0..k {
                for t in 0..k {
                    if !used_p[p] && !used_t[t] && (!found || conf[p][t] > pick.2) {
                        pick = (p, t, conf[p][t]);
                        found = true;
                    }
                }
            }
            used_p[pick.0] = true;
            used_t[pick.1] = true;
            total += pick.2;
        }
        total
    };
    matched as f64 / truth.len() as f64
}

fn permute(perm: &mut Vec<usize>, at: usize, conf: &[Vec<usize>], best: &mut usize) {
    if at == perm.len() {
        let score = perm.iter().enumerate().map(|(p, &t)| conf[p][t]).sum();
        *best = (*best).max(score);
        return;
    }
    for i in at..perm.len() {
        perm.swap(at, i);
        permute(perm, at + 1, conf, best);
        perm.swap(at, i);
    }
}

/// Rows scaled to unit norm; zero rows stay zero.
pub(crate) fn normalize_rows(m: &mut DMatrix<f64>) {
    for j in 0..m.nrows() {
        let norm = m.row(j).norm();
        if norm > 0.0 {
            let mut row = m.row_mut(j);
            row /= norm;
        }
    }
}
