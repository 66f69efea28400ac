//! Pretests for cross-sectional dependence: the Breusch-Pagan LM test on
//! pairwise correlations and its bias-corrected, standardized variant.
//!
//! Correlations are computed on unit-demeaned rows; the bias correction uses
//! the exact small-sample moments for a mean-only regression (one regressor).

use nalgebra::DMatrix;

use crate::error::{EpaError, Result};
use crate::epa_tests::Distribution;
use crate::pvalues::{chisq_p, normal_p};

/// Result of a cross-sectional dependence pretest.
#[derive(Debug, Clone)]
pub struct CdReport {
    pub name: String,
    pub statistic: f64,
    pub distribution: Distribution,
    pub p_value: f64,
    /// Whether the input rows were PC residuals rather than raw data.
    pub defactored: bool,
    /// Number of factors removed before testing (0 when raw).
    pub m_used: usize,
}

fn pairwise_correlations(rows: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (n, t) = rows.shape();
    if n < 2 {
        return Err(EpaError::InvalidArgument("CD tests need at least 2 units".into()));
    }
    if t < 2 {
        return Err(EpaError::InvalidArgument("CD tests need at least 2 periods".into()));
    }
    let mut centered = rows.clone();
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let mean = centered.row(i).sum() / t as f64;
        centered.row_mut(i).add_scalar_mut(-mean);
        let norm = centered.row(i).norm();
        if norm == 0.0 {
            return Err(EpaError::degenerate_at_unit(i));
        }
        norms.push(norm);
    }
    let mut rho = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            rho.push(centered.row(i).dot(&centered.row(j)) / (norms[i] * norms[j]));
        }
    }
    Ok(rho)
}

/// Breusch-Pagan LM statistic `T * sum_{i<j} rho_ij^2`, chi-square with
/// n(n-1)/2 degrees of freedom.
pub fn bp_lm(rows: &DMatrix<f64>) -> Result<CdReport> {
    let n = rows.nrows();
    let t = rows.ncols() as f64;
    let rho = pairwise_correlations(rows)?;
    let statistic = t * rho.iter().map(|r| r * r).sum::<f64>();
    let df = n * (n - 1) / 2;
    Ok(CdReport {
        name: "bp_lm".into(),
        statistic,
        distribution: Distribution::ChiSquare(df),
        p_value: chisq_p(statistic, df)?,
        defactored: false,
        m_used: 0,
    })
}

/// Exact mean and variance of `(T-k) rho^2` under the null for a mean-only
/// regression (k = 1), following the bias-corrected LM construction.
fn bias_correction_moments(t: usize, k: usize) -> Option<(f64, f64)> {
    let v = (t - k) as f64;
    if v <= 4.0 {
        return None; // the variance formula degenerates for very short panels
    }
    // tr(M_i M_j) = tr(M) = T - k when both units share the mean-only design
    let tr_mm = v;
    let a2 = 3.0 * (((v - 8.0) * (v + 2.0) + 24.0) / ((v + 2.0) * (v - 2.0) * (v - 4.0))).powi(2);
    let a1 = a2 - 1.0 / (v * v);
    let mu = tr_mm / v;
    let var = tr_mm * tr_mm * a1 + 2.0 * tr_mm * a2;
    Some((mu, var))
}

/// Bias-corrected, standardized LM statistic, asymptotically standard normal.
///
/// With `bias_correction` disabled this is the plain standardized LM,
/// `sqrt(1/(n(n-1))) * sum_{i<j} (T rho_ij^2 - 1)`.
pub fn bp_lm_bias_corrected(rows: &DMatrix<f64>, bias_correction: bool) -> Result<CdReport> {
    let n = rows.nrows();
    let t = rows.ncols();
    let rho = pairwise_correlations(rows)?;
    let pairs = (n * (n - 1)) as f64;

    let (name, statistic) = if bias_correction {
        let (mu, var) = bias_correction_moments(t, 1).ok_or_else(|| {
            EpaError::InvalidArgument("bias-corrected LM needs T > 5".into())
        })?;
        let v = (t - 1) as f64;
        let sum: f64 = rho.iter().map(|r| (v * r * r - mu) / var.sqrt()).sum();
        ("bp_lm_bc".to_string(), (2.0 / pairs).sqrt() * sum)
    } else {
        let sum: f64 = rho.iter().map(|r| t as f64 * r * r - 1.0).sum();
        ("bp_lm_std".to_string(), (1.0 / pairs).sqrt() * sum)
    };

    Ok(CdReport {
        name,
        statistic,
        distribution: Distribution::StdNormal,
        p_value: normal_p(statistic, true),
        defactored: false,
        m_used: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution as RandDistribution, Normal};

    fn random_rows(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        DMatrix::from_fn(n, t, |_, _| normal.sample(&mut rng))
    }

    #[test]
    fn identical_rows() {
        let row = [1.0, -0.5, 2.0, 0.3, -1.2];
        let rows = DMatrix::from_fn(2, 5, |_, j| row[j]);
        let r = bp_lm(&rows).unwrap();
        assert_relative_eq!(r.statistic, 5.0, max_relative = 1e-12);
        assert_eq!(r.distribution, Distribution::ChiSquare(1));
    }

    #[test]
    fn orthogonal_rows_give_zero() {
        // rows with exactly zero pairwise correlation after demeaning
        let rows = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0]);
        let r = bp_lm(&rows).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_variance_row_rejected() {
        let rows = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]);
        let err = bp_lm(&rows).unwrap_err();
        assert!(err.to_string().contains("unit 1"));
    }

    #[test]
    fn null_simulation_rejection_rate() {
        let reps = 2000;
        let mut rejections = 0;
        for r in 0..reps {
            let rows = random_rows(10, 200, 5000 + r);
            if bp_lm(&rows).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        assert!((rate - 0.05).abs() < 0.015, "bp_lm null rejection rate {rate}");
    }

    #[test]
    fn bias_corrected_null_magnitude() {
        let rows = random_rows(30, 100, 77);
        let r = bp_lm_bias_corrected(&rows, true).unwrap();
        assert!(r.statistic.abs() < 3.0, "statistic = {}", r.statistic);
    }

    #[test]
    fn bias_corrected_null_calibration() {
        let reps = 500;
        let mut rejections = 0;
        for r in 0..reps {
            let rows = random_rows(20, 50, 9000 + r);
            if bp_lm_bias_corrected(&rows, true).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        assert!((rate - 0.05).abs() < 0.03, "bias-corrected null rejection rate {rate}");
    }

    #[test]
    fn perfectly_correlated_panel() {
        let base: Vec<f64> = (0..40).map(|k| (k as f64 * 0.7).sin()).collect();
        let rows = DMatrix::from_fn(5, 40, |i, j| (i + 1) as f64 * base[j]);
        let r = bp_lm_bias_corrected(&rows, true).unwrap();
        assert!(r.statistic > 10.0);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn two_units_single_pair() {
        let rows = random_rows(2, 30, 11);
        let r = bp_lm(&rows).unwrap();
        assert_eq!(r.distribution, Distribution::ChiSquare(1));
        let bc = bp_lm_bias_corrected(&rows, true).unwrap();
        assert!(bc.statistic.is_finite());
    }

    #[test]
    fn affine_transform_invariance() {
        let rows = random_rows(4, 25, 13);
        let transformed = DMatrix::from_fn(4, 25, |i, j| 2.5 * rows[(i, j)] * (i + 1) as f64 + 3.0);
        let a = bp_lm(&rows).unwrap().statistic;
        let b = bp_lm(&transformed).unwrap().statistic;
        assert_relative_eq!(a, b, max_relative = 1e-10);
        assert!(a >= 0.0);
    }
}
