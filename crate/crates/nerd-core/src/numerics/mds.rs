//! Classical (Torgerson) multidimensional scaling.
//!
//! Double-centers the squared distance matrix into a Gram matrix, takes its
//! leading eigenpairs, and scales eigenvectors by sqrt(eigenvalue).
//! Negative eigenvalues — which appear whenever the dissimilarities are not
//! exactly Euclidean — are clamped to zero, so the corresponding axes
//! collapse instead of going imaginary.

use alloc::vec;

use crate::error::{invalid, Result};
use crate::numerics::mat::{sym_eigen, Mat};

/// Embed the points behind the distance matrix into `dims` dimensions.
/// Returns an n x dims coordinate matrix centered on the origin.
pub fn classical_mds(dist: &Mat, dims: usize) -> Result<Mat> {
    let n = dist.rows();
    if n == 0 {
        return Err(invalid("empty distance matrix"));
    }
    if dist.cols() != n {
        return Err(invalid("distance matrix must be square"));
    }
    if dims == 0 || dims > n {
        return Err(invalid("dims must be in 1..=n"));
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

    // squared distances and their row/grand means
    let mut sq = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sq[(i, j)] = dist[(i, j)] * dist[(i, j)];
        }
    }
    let mut row_mean = vec![0.0; n];
    let mut grand = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += sq[(i, j)];
        }
        row_mean[i] = s / n as f64;
        grand += s;
    }
    grand /= (n * n) as f64;

    let mut gram = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand);
        }
    }

    let (eigvals, eigvecs) = sym_eigen(&gram)?;
    let mut coords = Mat::zeros(n, dims);
    for c in 0..dims {
        let scale = libm::sqrt(eigvals[c].max(0.0));
        for i in 0..n {
            coords[(i, c)] = eigvecs[(i, c)] * scale;
        }
    }
    Ok(coords)
}
