//! Scalar statistics: Gaussian log-density, Pearson correlation, paired t.

use crate::error::{degenerate, invalid, Result};
use crate::numerics::special::student_t_sf;

pub(crate) const LN_2PI: f64 = 1.837877066409345483560659472811; // ln(2*pi)

/// Numerically stable logistic function 1 / (1 + e^-r).
pub fn logistic(r: f64) -> f64 {
    if r >= 0.0 {
        1.0 / (1.0 + libm::exp(-r))
    } else {
        let e = libm::exp(r);
        e / (1.0 + e)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n-1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Log-density of N(mu, sigma^2) at x.
pub fn gaussian_logpdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !x.is_finite() || !mu.is_finite() || !sigma.is_finite() {
        return Err(invalid("non-finite input to gaussian_logpdf"));
    }
    if sigma <= 0.0 {
        return Err(invalid(alloc::format!("sigma must be positive, got {sigma}")));
    }
    let z = (x - mu) / sigma;
    Ok(-0.5 * LN_2PI - libm::log(sigma) - 0.5 * z * z)
}

/// Pearson correlation coefficient.
///
/// Errors: length mismatch or n < 2 (invalid argument), zero variance in
/// either input (degenerate input).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid("pearson inputs differ in length"));
    }
    if x.len() < 2 {
        return Err(invalid("pearson needs at least 2 points"));
    }
    let mx = mean(x);
    let my = mean(y);
    let mut num = 0.0;
    let mut dx2 = 0.0;
    let mut dy2 = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        num += dx * dy;
        dx2 += dx * dx;
        dy2 += dy * dy;
    }
    if dx2 == 0.0 || dy2 == 0.0 {
        return Err(degenerate("zero variance in pearson input"));
    }
    Ok(num / (libm::sqrt(dx2) * libm::sqrt(dy2)))
}

/// Two-sided paired t-test. Returns (t statistic, p value); dof = n - 1.
///
/// Errors: length mismatch or n < 2 (invalid argument), zero variance of
/// the differences (degenerate input).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(invalid("paired t-test inputs differ in length"));
    }
    let n = a.len();
    if n < 2 {
        return Err(invalid("paired t-test needs at least 2 pairs"));
    }
    let d: alloc::vec::Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let md = mean(&d);
    let vd = sample_variance(&d);
    if vd == 0.0 {
        return Err(degenerate("zero variance of paired differences"));
    }
    let t = md / libm::sqrt(vd / n as f64);
    let p = 2.0 * student_t_sf(libm::fabs(t), (n - 1) as u64)?;
    Ok((t, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logpdf_standard_normal_at_zero() {
        // -0.5 ln(2 pi)
        let v = gaussian_logpdf(0.0, 0.0, 1.0).unwrap();
        assert!((v - (-0.9189385332046727)).abs() < 1e-15);
    }

    #[test]
    fn logpdf_scales_with_sigma() {
        for sigma in [0.5, 2.0] {
            let v = gaussian_logpdf(3.0, 3.0, sigma).unwrap();
            let expect = -0.9189385332046727 - libm::log(sigma);
            assert!((v - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn logpdf_rejects_bad_input() {
        assert!(gaussian_logpdf(0.0, 0.0, 0.0).is_err());
        assert!(gaussian_logpdf(0.0, 0.0, -1.0).is_err());
        assert!(gaussian_logpdf(f64::NAN, 0.0, 1.0).is_err());
        assert!(gaussian_logpdf(0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn pearson_exact_lines() {
        let x = [1.0, 2.0, 3.0];
        let y2: alloc::vec::Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((pearson(&x, &y2).unwrap() - 1.0).abs() < 1e-15);
        let yr: alloc::vec::Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert!((pearson(&x, &yr).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_fixture() {
        // 5 / (2 sqrt(7)), hand-derived
        let r = pearson(&[1.0, 2.0, 4.0], &[2.0, 2.0, 5.0]).unwrap();
        assert!((r - 0.9449111825230680).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(crate::Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn paired_t_fixture() {
        // frozen from an independent run
        let a = [5.1, 4.8, 6.2, 5.9, 4.5, 5.5, 6.1, 5.0];
        let b = [4.9, 4.9, 5.8, 5.1, 4.4, 5.9, 5.2, 4.6];
        let (t, p) = paired_t_test(&a, &b).unwrap();
        assert!((t - 1.8664236279537398).abs() < 1e-12, "t={t}");
        assert!((p - 0.10422380768049024).abs() < 1e-10, "p={p}");
    }

    #[test]
    fn paired_t_degenerate() {
        let a = [1.0, 2.0, 3.0];
        let b = [0.5, 1.5, 2.5]; // constant difference
        assert!(matches!(
            paired_t_test(&a, &b),
            Err(crate::Error::DegenerateInput(_))
        ));
        assert!(matches!(
            paired_t_test(&a, &a),
            Err(crate::Error::DegenerateInput(_))
        ));
    }
}
