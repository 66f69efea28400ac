//! Principal-components estimation of the approximate factor model on
//! demeaned loss differentials, plus factor-count selection.

use nalgebra::DMatrix;

use crate::error::{EpaError, Result};
use crate::panel::DemeanedPanel;

/// A PC fit: factors scaled so that `(1/T) F'F = I_m`, loadings by
/// projection, residuals and their sum of squares.
#[derive(Debug, Clone)]
pub struct FactorFit {
    m: usize,
    f_hat: DMatrix<f64>,      // T x m
    lambda_hat: DMatrix<f64>, // n x m
    resid: DMatrix<f64>,      // n x T
    ssr: f64,
}

impl FactorFit {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn f_hat(&self) -> &DMatrix<f64> {
        &self.f_hat
    }

    pub fn lambda_hat(&self) -> &DMatrix<f64> {
        &self.lambda_hat
    }

    pub fn resid(&self) -> &DMatrix<f64> {
        &self.resid
    }

    pub fn ssr(&self) -> f64 {
        self.ssr
    }
}

/// Eigenvalues of the T x T cross-product matrix, sorted descending, with
/// the matching eigenvectors as columns.
fn sorted_eigen(dm: &DemeanedPanel) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let x = dm.values();
    let a = x.transpose() * x; // T x T
    let eig = a.symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(EpaError::EigenFailed);
    }
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues")
    });
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    Ok((values, vectors))
}

/// Fit `m` principal-component factors. Factors are `sqrt(T)` times the
/// leading eigenvectors of the T x T cross-product matrix; each factor
/// column is flipped so its loading column sum is nonnegative.
pub fn pc_fit(dm: &DemeanedPanel, m: usize) -> Result<FactorFit> {
    let (n, t) = (dm.n_units(), dm.n_periods());
    if m < 1 || m > n.min(t) {
        return Err(EpaError::InvalidArgument(format!(
            "factor count {m} outside 1..=min(n,T)={}",
            n.min(t)
        )));
    }
    let (_, vectors) = sorted_eigen(dm)?;
    let mut f_hat = vectors.columns(0, m).into_owned() * (t as f64).sqrt();
    let mut lambda_hat = dm.values() * &f_hat / t as f64;
    for c in 0..m {
        if lambda_hat.column(c).sum() < 0.0 {
            f_hat.column_mut(c).neg_mut();
            lambda_hat.column_mut(c).neg_mut();
        }
    }
    let resid = dm.values() - &lambda_hat * f_hat.transpose();
    let ssr = resid.iter().map(|v| v * v).sum();
    Ok(FactorFit { m, f_hat, lambda_hat, resid, ssr })
}

/// Number of factors minimizing the IC_p1 criterion over `1..=m_max`:
/// `ln V(k) + k ((n+T)/(nT)) ln(nT/(n+T))` with `V(k) = SSR(k)/(nT)`.
pub fn select_num_factors(dm: &DemeanedPanel, m_max: usize) -> Result<usize> {
    let (n, t) = (dm.n_units(), dm.n_periods());
    if m_max < 1 || m_max > n.min(t) {
        return Err(EpaError::InvalidArgument(format!(
            "m_max {m_max} outside 1..=min(n,T)={}",
            n.min(t)
        )));
    }
    let (eigenvalues, _) = sorted_eigen(dm)?;
    let total: f64 = eigenvalues.iter().sum();
    let nt = (n * t) as f64;
    let penalty_unit = ((n + t) as f64 / nt) * (nt / (n + t) as f64).ln();

    let mut best = (1usize, f64::INFINITY);
    let mut top_sum = 0.0;
    for k in 1..=m_max {
        top_sum += eigenvalues[k - 1];
        let v = ((total - top_sum) / nt).max(1e-300);
        let ic = v.ln() + k as f64 * penalty_unit;
        if ic < best.1 {
            best = (k, ic);
        }
    }
    Ok(best.0)
}

/// Residual rows after removing `m` PC factors; `m = 0` returns the input.
pub fn defactor(dm: &DemeanedPanel, m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Ok(dm.values().clone());
    }
    Ok(pc_fit(dm, m)?.resid().clone())
}
