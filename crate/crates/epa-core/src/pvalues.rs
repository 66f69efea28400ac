//! Reference distributions: standard normal and chi-square tail probabilities.

use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{EpaError, Result};

const P_FLOOR: f64 = 1e-300;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Normal p-value: two-sided `2(1 - Phi(|s|))` or upper-tail `1 - Phi(s)`.
pub fn normal_p(statistic: f64, two_sided: bool) -> f64 {
    let p = if two_sided {
        erfc(statistic.abs() / std::f64::consts::SQRT_2)
    } else {
        0.5 * erfc(statistic / std::f64::consts::SQRT_2)
    };
    p.clamp(P_FLOOR, 1.0)
}

/// Chi-square upper-tail p-value with `df` degrees of freedom.
pub fn chisq_p(statistic: f64, df: usize) -> Result<f64> {
    if df < 1 {
        return Err(EpaError::InvalidArgument("chi-square df must be >= 1".into()));
    }
    if statistic <= 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_ur(df as f64 / 2.0, statistic / 2.0).clamp(P_FLOOR, 1.0))
}
