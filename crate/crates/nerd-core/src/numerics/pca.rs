//! Principal component analysis on the sample covariance matrix.
//!
//! Components come out of the symmetric Jacobi eigensolver, so they inherit
//! its determinism guarantees: eigenvalues sorted descending, each
//! eigenvector's largest-magnitude entry made positive. Explained-variance
//! ratios are taken against the total over *all* eigenvalues (negatives
//! clamped to zero first), not just the retained ones.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::numerics::mat::{sym_eigen, Mat};

/// Output of [`pca`].
#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// One retained component per row (n_components x d).
    pub components: Mat,
    /// Fraction of total variance captured by each retained component.
    pub explained_variance_ratio: Vec<f64>,
    /// Centered data projected onto the components (n x n_components).
    pub scores: Mat,
    /// Column means subtracted before projection.
    pub mean: Vec<f64>,
}

/// Fit a PCA of `n_components` directions to row-major `data` (n x d).
pub fn pca(data: &Mat, n_components: usize) -> Result<PcaResult> {
    let n = data.rows();
    let d = data.cols();
    if n < 2 {
        return Err(invalid("pca needs at least two rows"));
    }
    if n_components == 0 || n_components > d {
        return Err(invalid("n_components must be in 1..=d"));
    }
    if !data.is_finite() {
        return Err(invalid("non-finite value in pca input"));
    }

    let mut mean = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            mean[j] += data[(i, j)];
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let mut centered = Mat::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            centered[(i, j)] = data[(i, j)] - mean[j];
        }
    }

    let mut cov = Mat::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut s = 0.0;
            for i in 0..n {
                s += centered[(i, a)] * centered[(i, b)];
            }
            let v = s / (n as f64 - 1.0);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let (eigvals, eigvecs) = sym_eigen(&cov)?;
    let total: f64 = eigvals.iter().map(|&l| l.max(0.0)).sum();

    let mut components = Mat::zeros(n_components, d);
    let mut ratio = vec![0.0; n_components];
    for c in 0..n_components {
        for j in 0..d {
            components[(c, j)] = eigvecs[(j, c)];
        }
        if total > 0.0 {
            ratio[c] = eigvals[c].max(0.0) / total;
        }
    }

    let scores = centered.matmul(&components.transpose())?;

    Ok(PcaResult {
        components,
        explained_variance_ratio: ratio,
        scores,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_along_x_axis() {
        let rows = vec![
            vec![-2.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![2.0, 0.0],
        ];
        let p = pca(&Mat::from_rows(&rows).unwrap(), 1).unwrap();
        assert!((p.components[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(p.components[(0, 1)].abs() < 1e-12);
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        // scores are the centered x coordinates
        for (i, want) in [-2.0, -1.0, 0.0, 1.0, 2.0].iter().enumerate() {
            assert!((p.scores[(i, 0)] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_cross_splits_variance_evenly() {
        let rows = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ];
        let p = pca(&Mat::from_rows(&rows).unwrap(), 2).unwrap();
        assert!((p.explained_variance_ratio[0] - 0.5).abs() < 1e-12);
        assert!((p.explained_variance_ratio[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn frozen_three_column_fixture() {
        let rows = vec![
            vec![2.1, -1.3, 0.4],
            vec![0.5, 0.8, -0.9],
            vec![-1.2, 2.2, 1.5],
            vec![3.3, -0.7, -0.2],
            vec![-0.8, 1.1, 0.6],
        ];
        let data = Mat::from_rows(&rows).unwrap();
        let p = pca(&data, 3).unwrap();
        let ratios = [
            0.87487685743633881,
            0.090432094307785441,
            0.034691048255875823,
        ];
        for c in 0..3 {
            assert!(
                (p.explained_variance_ratio[c] - ratios[c]).abs() < 1e-10,
                "ratio {c}"
            );
        }
        let c0 = [0.79457314849699412, -0.56737181779990209, -0.216200675424497];
        let c1 = [0.059794983005732001, -0.28122727988220902, 0.95777647551889566];
        for j in 0..3 {
            assert!((p.components[(0, j)] - c0[j]).abs() < 1e-9, "c0[{j}]");
            assert!((p.components[(1, j)] - c1[j]).abs() < 1e-9, "c1[{j}]");
        }
        // full-rank projection reconstructs the data
        let recon = p.scores.matmul(&p.components).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                assert!((recon[(i, j)] + p.mean[j] - data[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let one = Mat::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(pca(&one, 1).is_err());
        let two = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(pca(&two, 0).is_err());
        assert!(pca(&two, 3).is_err());
    }
}
