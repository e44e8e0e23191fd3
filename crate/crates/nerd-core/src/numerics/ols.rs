//! Ordinary least squares with classical inference.
//!
//! The solver runs on a Householder QR factorization of the design matrix
//! (never forming X'X), with standard errors from (X'X)^-1 = R^-1 R^-T and
//! two-sided p-values from the t survival function. The test suite checks
//! the coefficients against an independent normal-equations +
//! Gaussian-elimination oracle, which is also why that slower route is not
//! used here.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::numerics::mat::Mat;
use crate::numerics::special::student_t_sf;
use crate::numerics::stats::mean;

/// A fitted linear model with per-coefficient inference.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub residual_dof: usize,
    pub design_column_names: Vec<String>,
}

/// Fit y ~ design by least squares. Columns are named x0, x1, ...;
/// use [`ols_fit_named`] to attach meaningful labels.
pub fn ols_fit(design: &Mat, y: &[f64]) -> Result<LinearFit> {
    let names: Vec<String> = (0..design.cols()).map(|j| alloc::format!("x{j}")).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    ols_fit_named(design, y, &name_refs)
}

/// Fit y ~ design with caller-supplied column names.
pub fn ols_fit_named(design: &Mat, y: &[f64], names: &[&str]) -> Result<LinearFit> {
    let n = design.rows();
    let k = design.cols();
    if y.len() != n {
        return Err(invalid("response length does not match design rows"));
    }
    if names.len() != k {
        return Err(invalid("column-name count does not match design columns"));
    }
    if k == 0 {
        return Err(invalid("empty design matrix"));
    }
    if n <= k {
        return Err(Error::InsufficientData { rows: n, cols: k });
    }
    if !design.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite value in regression input"));
    }

    // Householder QR on a working copy; reflections applied to qty in lockstep
    let mut a = design.clone();
    let mut qty: Vec<f64> = y.to_vec();
    for j in 0..k {
        // build the reflector for column j from rows j..n
        let mut norm2 = 0.0;
        for i in j..n {
            norm2 += a[(i, j)] * a[(i, j)];
        }
        let norm = libm::sqrt(norm2);
        if norm == 0.0 {
            continue; // column already zero below the diagonal; rank check below
        }
        let alpha = if a[(j, j)] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n - j];
        v[0] = a[(j, j)] - alpha;
        for i in j + 1..n {
            v[i - j] = a[(i, j)];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        a[(j, j)] = alpha;
        for i in j + 1..n {
            a[(i, j)] = 0.0;
        }
        if vtv == 0.0 {
            continue;
        }
        for col in j + 1..k {
            let mut dot = 0.0;
            for i in j..n {
                dot += v[i - j] * a[(i, col)];
            }
            let f = 2.0 * dot / vtv;
            for i in j..n {
                a[(i, col)] -= f * v[i - j];
            }
        }
        let mut dot = 0.0;
        for i in j..n {
            dot += v[i - j] * qty[i];
        }
        let f = 2.0 * dot / vtv;
        for i in j..n {
            qty[i] -= f * v[i - j];
        }
    }

    // rank check on the R diagonal
    let max_diag = (0..k).map(|j| libm::fabs(a[(j, j)])).fold(0.0, f64::max);
    let tol = f64::EPSILON * (n as f64) * max_diag;
    for j in 0..k {
        if libm::fabs(a[(j, j)]) <= tol {
            return Err(Error::SingularDesign);
        }
    }

    // back-substitution R beta = (Q'y)[0..k]
    let mut beta = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = qty[j];
        for m in j + 1..k {
            s -= a[(j, m)] * beta[m];
        }
        beta[j] = s / a[(j, j)];
    }

    // residuals against the original inputs
    let mut rss = 0.0;
    for i in 0..n {
        let fitted: f64 = design.row(i).iter().zip(&beta).map(|(x, b)| x * b).sum();
        let r = y[i] - fitted;
        rss += r * r;
    }
    let dof = n - k;
    let sigma2 = rss / dof as f64;

    // (X'X)^-1 diagonal via R^-1: inv_jj = sum_m (R^-1)[j][m]^2
    let mut rinv = Mat::zeros(k, k);
    for col in 0..k {
        // solve R x = e_col
        for j in (0..k).rev() {
            let mut s = if j == col { 1.0 } else { 0.0 };
            for m in j + 1..k {
                s -= a[(j, m)] * rinv[(m, col)];
            }
            rinv[(j, col)] = s / a[(j, j)];
        }
    }
    let mut std_errors = vec![0.0; k];
    for j in 0..k {
        let mut s = 0.0;
        for m in 0..k {
            s += rinv[(j, m)] * rinv[(j, m)];
        }
        std_errors[j] = libm::sqrt(sigma2 * s);
    }

    let mut t_stats = vec![0.0; k];
    let mut p_values = vec![0.0; k];
    for j in 0..k {
        if std_errors[j] > 0.0 {
            t_stats[j] = beta[j] / std_errors[j];
            p_values[j] = 2.0 * student_t_sf(libm::fabs(t_stats[j]), dof as u64)?;
        } else {
            // exact fit: infinitely precise estimate
            t_stats[j] = if beta[j] == 0.0 {
                0.0
            } else if beta[j] > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            p_values[j] = if beta[j] == 0.0 { 1.0 } else { 0.0 };
        }
    }

    let my = mean(y);
    let tss: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let r_squared = if tss < 1e-12 { 0.0 } else { 1.0 - rss / tss };

    Ok(LinearFit {
        coefficients: beta,
        std_errors,
        t_stats,
        p_values,
        r_squared,
        residual_dof: dof,
        design_column_names: names.iter().map(|s| s.to_string()).collect(),
    })
}
