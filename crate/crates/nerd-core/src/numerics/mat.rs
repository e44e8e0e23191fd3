//! Dense row-major matrix plus the symmetric eigensolver used by PCA/MDS.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{invalid, Error, Result};

/// Dense row-major `f64` matrix. Small and boring on purpose: the largest
/// matrices in this crate are a few hundred rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Build from a flat row-major buffer; `data.len()` must equal
    /// `rows * cols`.
    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(alloc::format!(
                "matrix buffer has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Build from row vectors; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Ok(Mat::zeros(0, 0));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(invalid("ragged rows"));
            }
            data.extend_from_slice(r);
        }
        Ok(Mat { rows: rows.len(), cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(invalid("matvec dimension mismatch"));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(invalid("matmul dimension mismatch"));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns eigenvalues sorted descending and the matching eigenvectors as
/// the COLUMNS of the returned matrix. Each eigenvector's sign is fixed so
/// that its largest-magnitude entry (first such entry on exact ties) is
/// positive, which makes every caller's output deterministic.
///
/// Jacobi is quadratic-ish and unapologetically simple; for the n <= a few
/// hundred symmetric problems in this crate it is fast, and it never loses
/// orthogonality the way naive power iterations can.
pub fn sym_eigen(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    if a.rows() != a.cols() {
        return Err(invalid("eigendecomposition needs a square matrix"));
    }
    if !a.is_finite() {
        return Err(invalid("non-finite matrix entry"));
    }
    let n = a.rows();
    if n == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    let scale = 1.0f64.max(m.frobenius_norm());
    let tol = 1e-14 * scale;

    let max_sweeps = 100;
    let mut sweep = 0;
    loop {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if libm::sqrt(2.0 * off) <= tol {
            break;
        }
        sweep += 1;
        if sweep > max_sweeps {
            return Err(Error::NumericFailure {
                step: max_sweeps,
                detail: alloc::format!("Jacobi failed to converge (off-norm {:e})", libm::sqrt(2.0 * off)),
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if libm::fabs(apq) <= tol / (n as f64) {
                    continue;
                }
                // classic Jacobi rotation annihilating m[p][q]
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = {
                    let s = if theta >= 0.0 { 1.0 } else { -1.0 };
                    s / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[(p, j)];
                    let mqj = m[(q, j)];
                    m[(p, j)] = c * mpj - s * mqj;
                    m[(q, j)] = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }

    // sort eigenpairs by descending eigenvalue (stable, so exact ties keep
    // their sweep order)
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].partial_cmp(&m[(i, i)]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        // deterministic sign: largest-|entry| component positive
        let mut arg = 0;
        for i in 1..n {
            if libm::fabs(v[(i, old_j)]) > libm::fabs(v[(arg, old_j)]) {
                arg = i;
            }
        }
        let flip = if v[(arg, old_j)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, new_j)] = flip * v[(i, old_j)];
        }
    }
    Ok((eigenvalues, vectors))
}
