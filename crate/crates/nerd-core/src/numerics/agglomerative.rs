//! Agglomerative hierarchical clustering over a precomputed distance matrix.
//!
//! Cluster distances update through the Lance-Williams recurrences, so the
//! full merge history costs O(n^2) memory and O(n^3) time — fine at the
//! cohort sizes this crate targets. Ties on the closest pair resolve to the
//! lexicographically smallest slot pair, making the merge order fully
//! deterministic. The test suite replays every result against a naive
//! implementation that recomputes cluster distances from the original
//! matrix each round.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::mat::Mat;

/// How to measure the distance between two clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    /// Unweighted average of all cross-cluster point distances (UPGMA).
    Average,
    /// Largest cross-cluster point distance.
    Complete,
}

/// One merge step. `a` and `b` are cluster ids: originals are 0..n, the
/// cluster created by merge step s gets id n + s. `a < b` always.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

/// Full merge history of a hierarchical clustering (n - 1 merges).
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n_points: usize,
    pub merges: Vec<Merge>,
}

fn validate_distance_matrix(dist: &Mat) -> Result<()> {
    let n = dist.rows();
    if n == 0 {
        return Err(invalid("empty distance matrix"));
    }
    if dist.cols() != n {
        return Err(invalid("distance matrix must be square"));
    }
    if !dist.is_finite() {
        return Err(invalid("non-finite value in distance matrix"));
    }
    for i in 0..n {
        if libm::fabs(dist[(i, i)]) > 1e-12 {
            return Err(invalid("distance matrix diagonal must be zero"));
        }
        for j in i + 1..n {
            if dist[(i, j)] < 0.0 {
                return Err(invalid("negative entry in distance matrix"));
            }
            if libm::fabs(dist[(i, j)] - dist[(j, i)]) > 1e-9 {
                return Err(invalid("distance matrix must be symmetric"));
            }
        }
    }
    Ok(())
}

struct MergeEngine {
    work: Mat,
    active: Vec<bool>,
    sizes: Vec<usize>,
    ids: Vec<usize>,
    members: Vec<Vec<usize>>,
    next_id: usize,
}

impl MergeEngine {
    fn new(dist: &Mat) -> Self {
        let n = dist.rows();
        MergeEngine {
            work: dist.clone(),
            active: vec![true; n],
            sizes: vec![1; n],
            ids: (0..n).collect(),
            members: (0..n).map(|i| vec![i]).collect(),
            next_id: n,
        }
    }

    /// Perform one merge; returns its record. Panics if fewer than two
    /// clusters remain (callers bound the loop).
    fn step(&mut self, linkage: Linkage) -> Merge {
        let n = self.active.len();
        let mut best = (usize::MAX, usize::MAX);
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            if !self.active[i] {
                continue;
            }
            for j in i + 1..n {
                if !self.active[j] {
                    continue;
                }
                if self.work[(i, j)] < best_d {
                    best_d = self.work[(i, j)];
                    best = (i, j);
                }
            }
        }
        let (i, j) = best;
        assert!(i != usize::MAX, "merge requested with fewer than two clusters");
        let (si, sj) = (self.sizes[i] as f64, self.sizes[j] as f64);
        for m in 0..n {
            if !self.active[m] || m == i || m == j {
                continue;
            }
            let dim = self.work[(i, m)];
            let djm = self.work[(j, m)];
            let updated = match linkage {
                Linkage::Average => (si * dim + sj * djm) / (si + sj),
                Linkage::Complete => dim.max(djm),
            };
            self.work[(i, m)] = updated;
            self.work[(m, i)] = updated;
        }
        self.active[j] = false;
        self.sizes[i] += self.sizes[j];
        let moved = core::mem::take(&mut self.members[j]);
        self.members[i].extend(moved);
        let (ida, idb) = (self.ids[i].min(self.ids[j]), self.ids[i].max(self.ids[j]));
        self.ids[i] = self.next_id;
        self.next_id += 1;
        Merge {
            a: ida,
            b: idb,
            height: best_d,
            size: self.sizes[i],
        }
    }

    /// Current clusters as member lists, ordered by smallest member index.
    fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .members
            .iter()
            .zip(&self.active)
            .filter(|(_, &a)| a)
            .map(|(m, _)| {
                let mut v = m.clone();
                v.sort_unstable();
                v
            })
            .collect();
        out.sort_by_key(|c| c[0]);
        out
    }
}

/// Build the complete merge history for `dist` under the given linkage.
pub fn agglomerative_dendrogram(dist: &Mat, linkage: Linkage) -> Result<Dendrogram> {
    validate_distance_matrix(dist)?;
    let n = dist.rows();
    let mut engine = MergeEngine::new(dist);
    let merges = (0..n.saturating_sub(1)).map(|_| engine.step(linkage)).collect();
    Ok(Dendrogram { n_points: n, merges })
}

/// Cut the hierarchy at `k` clusters. Labels are assigned 0..k in order of
/// each cluster's smallest member index.
pub fn agglomerative_cluster(dist: &Mat, k: usize, linkage: Linkage) -> Result<Vec<usize>> {
    validate_distance_matrix(dist)?;
    let n = dist.rows();
    if k == 0 || k > n {
        return Err(invalid("cluster count must be in 1..=n"));
    }
    let mut engine = MergeEngine::new(dist);
    for _ in 0..n - k {
        engine.step(linkage);
    }
    let mut labels = vec![0usize; n];
    for (ci, cluster) in engine.clusters().iter().enumerate() {
        for &p in cluster {
            labels[p] = ci;
        }
    }
    Ok(labels)
}
