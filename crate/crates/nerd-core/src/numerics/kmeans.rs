//! Lloyd's k-means with k-means++ seeding.
//!
//! All randomness flows through the caller's [`RngStream`], restarts reuse
//! the same stream sequentially, and every tie (nearest centroid, best
//! restart) resolves to the lowest index, so a given (data, k, seed) triple
//! always produces the same clustering. Empty clusters are reseeded to the
//! point currently farthest from its assigned centroid.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::mat::Mat;
use crate::numerics::rng::RngStream;

const MAX_LLOYD_ITERS: usize = 500;

/// Output of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    /// Cluster index per data row, in 0..k.
    pub labels: Vec<usize>,
    /// Cluster centers (k x d).
    pub centroids: Mat,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(data: &Mat, k: usize, rng: &mut RngStream) -> Mat {
    let n = data.rows();
    let d = data.cols();
    let mut centroids = Mat::zeros(k, d);
    let first = rng.uniform_usize(n);
    for j in 0..d {
        centroids[(0, j)] = data[(first, j)];
    }
    let mut best = vec![f64::INFINITY; n];
    for c in 1..k {
        for i in 0..n {
            let d2 = dist2(data.row(i), centroids.row(c - 1));
            if d2 < best[i] {
                best[i] = d2;
            }
        }
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.uniform_01() * total;
            let mut cum = 0.0;
            let mut chosen = None;
            let mut last_positive = 0;
            for (i, &w) in best.iter().enumerate() {
                if w > 0.0 {
                    last_positive = i;
                }
                cum += w;
                if u < cum && w > 0.0 {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or(last_positive)
        } else {
            // every point coincides with an existing centroid
            rng.uniform_usize(n)
        };
        for j in 0..d {
            centroids[(c, j)] = data[(pick, j)];
        }
    }
    centroids
}

fn lloyd(data: &Mat, mut centroids: Mat) -> (Vec<usize>, Mat, f64) {
    let n = data.rows();
    let d = data.cols();
    let k = centroids.rows();
    let mut labels = vec![0usize; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d2 = dist2(data.row(i), centroids.row(c));
                if d2 < best_d {
                    best_d = d2;
                    best_c = c;
                }
            }
            if labels[i] != best_c {
                labels[i] = best_c;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        let mut sums = Mat::zeros(k, d);
        for i in 0..n {
            counts[labels[i]] += 1;
            for j in 0..d {
                sums[(labels[i], j)] += data[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // move the centroid onto the worst-served point
                let mut far_i = 0;
                let mut far_d = -1.0;
                for i in 0..n {
                    let d2 = dist2(data.row(i), centroids.row(labels[i]));
                    if d2 > far_d {
                        far_d = d2;
                        far_i = i;
                    }
                }
                for j in 0..d {
                    centroids[(c, j)] = data[(far_i, j)];
                }
                labels[far_i] = c;
                changed = true;
            } else {
                for j in 0..d {
                    centroids[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let inertia: f64 = (0..n)
        .map(|i| dist2(data.row(i), centroids.row(labels[i])))
        .sum();
    (labels, centroids, inertia)
}

/// Cluster the rows of `data` into `k` groups, keeping the best of
/// `n_restarts` independent initializations (first-seen wins inertia ties).
pub fn kmeans(data: &Mat, k: usize, n_restarts: usize, rng: &mut RngStream) -> Result<KmeansResult> {
    let n = data.rows();
    if n == 0 {
        return Err(invalid("kmeans needs at least one row"));
    }
    if k == 0 || k > n {
        return Err(invalid("k must be in 1..=n_rows"));
    }
    if n_restarts == 0 {
        return Err(invalid("n_restarts must be positive"));
    }
    if !data.is_finite() {
        return Err(invalid("non-finite value in kmeans input"));
    }

    let mut best: Option<KmeansResult> = None;
    for _ in 0..n_restarts {
        let init = plus_plus_init(data, k, rng);
        let (labels, centroids, inertia) = lloyd(data, init);
        let better = match &best {
            None => true,
            Some(b) => inertia < b.inertia,
        };
        if better {
            best = Some(KmeansResult {
                labels,
                centroids,
                inertia,
            });
        }
    }
    Ok(best.expect("at least one restart ran"))
}
