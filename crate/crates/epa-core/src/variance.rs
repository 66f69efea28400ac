//! Long-run variance estimators for the overall tests and n x n covariance
//! matrix estimators for the joint tests.
//!
//! All estimators operate on unit-demeaned loss differentials. The scalar
//! estimators correspond to the denominators of the overall statistics:
//! the per-unit HAC average, the spatial HAC, its partial-sample variant,
//! the cross-sectional-average (Driscoll-Kraay) estimator and the
//! factor-based estimator. Nonpositive variance estimates are reported as
//! errors, never as NaN.

use nalgebra::{DMatrix, DVector};

use crate::error::{EpaError, Result};
use crate::factors::FactorFit;
use crate::kernels::KernelSpec;
use crate::panel::{DemeanedPanel, DistanceMatrix};

/// Which scalar estimator produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrvEstimator {
    PerUnitAvg,
    Shac,
    PartialSample,
    DriscollKraay,
    Factor,
}

/// Convergence rate of the matching overall statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rate {
    SqrtNT,
    SqrtT,
}

/// A nonnegative long-run variance estimate with provenance.
#[derive(Debug, Clone, Copy)]
pub struct ScalarLrv {
    pub value: f64,
    pub estimator: LrvEstimator,
    pub rate: Rate,
}

impl ScalarLrv {
    fn new(value: f64, estimator: LrvEstimator, rate: Rate) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(EpaError::degenerate());
        }
        Ok(Self { value, estimator, rate })
    }

    pub fn estimator_name(&self) -> &'static str {
        match self.estimator {
            LrvEstimator::PerUnitAvg => "per_unit_avg",
            LrvEstimator::Shac => "shac",
            LrvEstimator::PartialSample => "partial_sample",
            LrvEstimator::DriscollKraay => "dk",
            LrvEstimator::Factor => "factor",
        }
    }
}

/// Idiosyncratic-term estimator used inside the factor-based variance.
#[derive(Debug, Clone, Copy)]
pub enum IdioEstimator<'a> {
    /// Space-kernel weighted residual covariances (requires distances).
    Shac(&'a DistanceMatrix),
    /// Partial-sample estimator on the residuals, scaled by 1/n.
    PartialSample,
    /// Only own-unit residual terms.
    Diagonal,
}

/// Kernel-weighted long-run variance of a single series:
/// `(1/T) sum_{t,s} k_T(|t-s|/(l_T+1)) x_t x_s`.
pub fn lrv_series(x: &[f64], spec: &KernelSpec) -> f64 {
    let t = x.len();
    let mut acc: f64 = x.iter().map(|v| v * v).sum();
    let max_lag = spec.max_lag().min(t.saturating_sub(1));
    for lag in 1..=max_lag {
        let w = spec.time_weight(lag);
        if w == 0.0 {
            continue;
        }
        let mut gamma = 0.0;
        for s in 0..t - lag {
            gamma += x[s] * x[s + lag];
        }
        acc += 2.0 * w * gamma;
    }
    acc / t as f64
}

fn row_vec(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// n x n matrix with entries `(1/T) sum_{t,s} k_T(|t-s|/(l_T+1)) x_{i,t} x_{j,s}`.
///
/// With `l_T = 0` this is the plain Gram matrix `X X' / T`.
pub fn weighted_gram(x: &DMatrix<f64>, spec: &KernelSpec) -> DMatrix<f64> {
    let t = x.ncols();
    let g = if spec.max_lag() == 0 {
        x * x.transpose()
    } else {
        let k = spec.time_weight_matrix(t);
        x * k * x.transpose()
    };
    g / t as f64
}

/// Per-unit HAC estimate `sigma_hat_i^2`. May be negative with the truncated
/// kernel; callers decide whether that is an error.
pub fn lrv_per_unit(dm: &DemeanedPanel, spec: &KernelSpec, i: usize) -> Result<f64> {
    if i >= dm.n_units() {
        return Err(EpaError::InvalidArgument(format!("unit {i} out of range")));
    }
    Ok(lrv_series(&row_vec(dm.values(), i), spec))
}

/// Average of the per-unit HAC estimates (denominator of the no-CD test).
pub fn lrv_avg(dm: &DemeanedPanel, spec: &KernelSpec) -> Result<ScalarLrv> {
    let n = dm.n_units();
    let mut acc = 0.0;
    for i in 0..n {
        acc += lrv_per_unit(dm, spec, i)?;
    }
    ScalarLrv::new(acc / n as f64, LrvEstimator::PerUnitAvg, Rate::SqrtNT)
}

fn space_weighted_sum(g: &DMatrix<f64>, spec: &KernelSpec, dist: &DistanceMatrix) -> f64 {
    let n = g.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = spec.space_weight(dist.get(i, j));
            if w != 0.0 {
                acc += w * g[(i, j)];
            }
        }
    }
    acc
}

/// Spatial HAC estimator: space-kernel weighted sum of the kernel-weighted
/// cross products, scaled by 1/(nT).
pub fn lrv_shac(dm: &DemeanedPanel, spec: &KernelSpec, dist: &DistanceMatrix) -> Result<ScalarLrv> {
    let n = dm.n_units();
    if dist.n_units() != n {
        return Err(EpaError::Shape("distance matrix does not match panel".into()));
    }
    let g = weighted_gram(dm.values(), spec);
    ScalarLrv::new(space_weighted_sum(&g, spec, dist) / n as f64, LrvEstimator::Shac, Rate::SqrtNT)
}

/// Number of units entering the partial-sample estimator.
pub fn partial_sample_size(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

fn partial_sample_value(x: &DMatrix<f64>, spec: &KernelSpec) -> f64 {
    let np = partial_sample_size(x.nrows());
    let sub = x.rows(0, np).into_owned();
    let g = weighted_gram(&sub, spec);
    g.sum() / np as f64
}

/// Partial-sample estimator over the first `ceil(sqrt(n))` units in stored order.
pub fn lrv_partial_sample(dm: &DemeanedPanel, spec: &KernelSpec) -> Result<ScalarLrv> {
    ScalarLrv::new(
        partial_sample_value(dm.values(), spec),
        LrvEstimator::PartialSample,
        Rate::SqrtNT,
    )
}

/// Cross-sectional-average (Driscoll-Kraay) estimator, computed on the
/// demeaned cross-sectional mean series in O(T * l_T) time.
pub fn lrv_dk(dm: &DemeanedPanel, spec: &KernelSpec) -> Result<ScalarLrv> {
    let n = dm.n_units() as f64;
    let t = dm.n_periods();
    let x = dm.values();
    let vbar: Vec<f64> = (0..t).map(|s| x.column(s).sum() / n).collect();
    ScalarLrv::new(lrv_series(&vbar, spec), LrvEstimator::DriscollKraay, Rate::SqrtT)
}

/// Factor-based estimator: common-component term plus an idiosyncratic term
/// computed on the PC residuals.
pub fn lrv_factor(
    dm: &DemeanedPanel,
    spec: &KernelSpec,
    fit: &FactorFit,
    idio: IdioEstimator<'_>,
) -> Result<ScalarLrv> {
    let n = dm.n_units();
    let t = dm.n_periods();
    if fit.resid().nrows() != n || fit.resid().ncols() != t {
        return Err(EpaError::Shape("factor fit does not match panel".into()));
    }
    let nf = n as f64;

    // Common term via the grouped form: with g_t = (sum_i lambda_i)' f_t the
    // quadruple sum collapses to the long-run variance of the series g.
    let common = if fit.m() == 0 {
        0.0
    } else {
        let lambda_sum = fit.lambda_hat().row_sum(); // 1 x m
        let g: Vec<f64> =
            (0..t).map(|s| (&lambda_sum * fit.f_hat().row(s).transpose())[0]).collect();
        lrv_series(&g, spec) / (nf * nf)
    };

    let resid = fit.resid();
    let idio_term = match idio {
        IdioEstimator::Shac(dist) => {
            if dist.n_units() != n {
                return Err(EpaError::Shape("distance matrix does not match panel".into()));
            }
            let ge = weighted_gram(resid, spec);
            space_weighted_sum(&ge, spec, dist) / (nf * nf)
        }
        IdioEstimator::PartialSample => partial_sample_value(resid, spec) / nf,
        IdioEstimator::Diagonal => {
            let mut acc = 0.0;
            for i in 0..n {
                acc += lrv_series(&row_vec(resid, i), spec);
            }
            acc / (nf * nf)
        }
    };

    ScalarLrv::new(common + idio_term, LrvEstimator::Factor, Rate::SqrtT)
}

/// Which covariance matrix estimator produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaKind {
    Omega1,
    Omega2,
    Omega3,
    Omega4,
}

impl OmegaKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OmegaKind::Omega1 => "omega1",
            OmegaKind::Omega2 => "omega2",
            OmegaKind::Omega3 => "omega3",
            OmegaKind::Omega4 => "omega4",
        }
    }
}

/// Residual covariance option for the factor-based joint estimator.
#[derive(Debug, Clone, Copy)]
pub enum ResidCov<'a> {
    /// Space-kernel weighted residual covariances.
    Spatial(&'a DistanceMatrix),
    /// All residual covariances with weight one (no distances available).
    Unit,
    /// Own-unit residual variances only.
    Diagonal,
}

/// Symmetric n x n covariance matrix estimate for the joint tests.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    omega: DMatrix<f64>,
    estimator: OmegaKind,
}

const COND_LIMIT: f64 = 1e12;

impl CovMatrix {
    fn new(mut omega: DMatrix<f64>, estimator: OmegaKind) -> Self {
        // symmetrize; kernel weighting can leave tiny asymmetries
        let sym = (&omega + omega.transpose()) * 0.5;
        omega = sym;
        Self { omega, estimator }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn estimator(&self) -> OmegaKind {
        self.estimator
    }

    pub fn n_units(&self) -> usize {
        self.omega.nrows()
    }

    /// `x' Omega^{-1} x` via the eigendecomposition, with an indefiniteness
    /// check, clipping of roundoff-negative eigenvalues and a condition
    /// number guard of 1e12.
    pub fn quad_form_inv(&self, x: &DVector<f64>) -> Result<f64> {
        let eig = self.omega.clone().symmetric_eigen();
        let trace: f64 = eig.eigenvalues.iter().sum();
        let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max_ev > 0.0) {
            return Err(EpaError::SingularCovariance);
        }
        let neg_tol = 1e-10 * trace.abs().max(1e-300);
        let mut clipped_any = false;
        let mut evs = Vec::with_capacity(eig.eigenvalues.len());
        for &ev in eig.eigenvalues.iter() {
            if ev < -neg_tol {
                return Err(EpaError::IndefiniteCovariance);
            }
            if ev <= 0.0 {
                clipped_any = true;
                evs.push(0.0);
            } else {
                evs.push(ev);
            }
        }
        let min_pos = evs.iter().cloned().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
        if max_ev / min_pos > COND_LIMIT {
            return Err(EpaError::SingularCovariance);
        }
        // genuinely rank-deficient matrices (not mere roundoff clipping) are singular
        if evs.iter().any(|&v| v == 0.0) && !clipped_any {
            return Err(EpaError::SingularCovariance);
        }
        let mut acc = 0.0;
        for (k, &ev) in evs.iter().enumerate() {
            if ev > 0.0 {
                let proj = eig.eigenvectors.column(k).dot(x);
                acc += proj * proj / ev;
            }
        }
        Ok(acc)
    }
}

/// Diagonal matrix of per-unit HAC estimates.
pub fn cov_omega1(dm: &DemeanedPanel, spec: &KernelSpec) -> Result<CovMatrix> {
    let n = dm.n_units();
    let mut omega = DMatrix::zeros(n, n);
    for i in 0..n {
        let v = lrv_per_unit(dm, spec, i)?;
        if v <= 0.0 {
            return Err(EpaError::degenerate_at_unit(i));
        }
        omega[(i, i)] = v;
    }
    Ok(CovMatrix::new(omega, OmegaKind::Omega1))
}

/// Space-kernel weighted covariance matrix.
pub fn cov_omega2(
    dm: &DemeanedPanel,
    spec: &KernelSpec,
    dist: &DistanceMatrix,
) -> Result<CovMatrix> {
    let n = dm.n_units();
    if dist.n_units() != n {
        return Err(EpaError::Shape("distance matrix does not match panel".into()));
    }
    let g = weighted_gram(dm.values(), spec);
    let omega = DMatrix::from_fn(n, n, |i, j| spec.space_weight(dist.get(i, j)) * g[(i, j)]);
    Ok(CovMatrix::new(omega, OmegaKind::Omega2))
}

/// Unweighted covariance matrix (Driscoll-Kraay style). Feasible only when n < T.
pub fn cov_omega3(dm: &DemeanedPanel, spec: &KernelSpec) -> Result<CovMatrix> {
    if dm.n_units() >= dm.n_periods() {
        return Err(EpaError::Infeasible("J3 infeasible: n >= T".into()));
    }
    Ok(CovMatrix::new(weighted_gram(dm.values(), spec), OmegaKind::Omega3))
}

/// Factor-based covariance matrix: common-component block plus a residual
/// covariance estimate.
pub fn cov_omega4(
    dm: &DemeanedPanel,
    spec: &KernelSpec,
    fit: &FactorFit,
    resid_cov: ResidCov<'_>,
) -> Result<CovMatrix> {
    let n = dm.n_units();
    let t = dm.n_periods();
    if fit.resid().nrows() != n || fit.resid().ncols() != t {
        return Err(EpaError::Shape("factor fit does not match panel".into()));
    }
    let common = if fit.m() == 0 {
        DMatrix::zeros(n, n)
    } else {
        // Lambda [ (1/T) F' K F ] Lambda'
        let f = fit.f_hat();
        let fk = if spec.max_lag() == 0 {
            f.transpose() * f
        } else {
            f.transpose() * spec.time_weight_matrix(t) * f
        } / t as f64;
        fit.lambda_hat() * fk * fit.lambda_hat().transpose()
    };

    let ge = weighted_gram(fit.resid(), spec);
    let sigma = match resid_cov {
        ResidCov::Spatial(dist) => {
            if dist.n_units() != n {
                return Err(EpaError::Shape("distance matrix does not match panel".into()));
            }
            DMatrix::from_fn(n, n, |i, j| spec.space_weight(dist.get(i, j)) * ge[(i, j)])
        }
        ResidCov::Unit => ge,
        ResidCov::Diagonal => DMatrix::from_fn(n, n, |i, j| if i == j { ge[(i, i)] } else { 0.0 }),
    };

    Ok(CovMatrix::new(common + sigma, OmegaKind::Omega4))
}
