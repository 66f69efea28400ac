//! Test statistics for the equal-predictive-ability hypotheses: per-unit DM
//! statistics, the overall tests S1-S4, the joint tests J1-J4 and the
//! standardized Z variants.
//!
//! All normal-based tests report two-sided p-values; chi-square tests are
//! upper-tail. The chi-square reference for J2 and J4 is heuristic (the
//! covariance estimate need not be full rank) and is flagged in the report
//! notes.

use nalgebra::DVector;

use crate::error::{EpaError, Result};
use crate::factors::FactorFit;
use crate::kernels::KernelSpec;
use crate::panel::{DistanceMatrix, LossPanel};
use crate::pvalues::{chisq_p, normal_p};
use crate::variance::{
    cov_omega1, cov_omega2, cov_omega3, cov_omega4, lrv_avg, lrv_dk, lrv_factor, lrv_partial_sample,
    lrv_per_unit, lrv_shac, IdioEstimator, ResidCov, ScalarLrv,
};

/// Reference distribution of a test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    StdNormal,
    ChiSquare(usize),
}

/// One computed test: statistic, reference distribution, p-value and the
/// provenance of the variance estimate behind it.
#[derive(Debug, Clone)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub distribution: Distribution,
    pub p_value: f64,
    pub two_sided: bool,
    pub variance_provenance: String,
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn df(&self) -> Option<usize> {
        match self.distribution {
            Distribution::ChiSquare(df) => Some(df),
            Distribution::StdNormal => None,
        }
    }

    fn normal(name: impl Into<String>, statistic: f64, provenance: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            statistic,
            distribution: Distribution::StdNormal,
            p_value: normal_p(statistic, true),
            two_sided: true,
            variance_provenance: provenance.into(),
            notes: Vec::new(),
        }
    }

    fn chi_square(
        name: impl Into<String>,
        statistic: f64,
        df: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            statistic,
            distribution: Distribution::ChiSquare(df),
            p_value: chisq_p(statistic, df)?,
            two_sided: false,
            variance_provenance: provenance.into(),
            notes: Vec::new(),
        })
    }
}

/// Variance estimator selection for the overall tests.
#[derive(Debug, Clone, Copy)]
pub enum OverallEstimator<'a> {
    /// Average of per-unit HAC variances (no CD).
    S1,
    /// Spatial HAC with known distances (WCD).
    S2 { dist: &'a DistanceMatrix },
    /// Partial-sample estimator (WCD, unknown distances).
    S2Partial,
    /// Cross-sectional-average estimator (arbitrary CD).
    S3,
    /// Factor-based estimator (SCD).
    S4 { fit: &'a FactorFit, idio: IdioEstimator<'a> },
}

/// Covariance estimator selection for the joint tests.
#[derive(Debug, Clone, Copy)]
pub enum JointEstimator<'a> {
    J1,
    J2 { dist: &'a DistanceMatrix },
    J3,
    J4 { fit: &'a FactorFit, resid_cov: ResidCov<'a> },
}

/// Per-unit Diebold-Mariano statistic `sqrt(T) * mean_i / sigma_hat_i`.
pub fn dm_unit_test(panel: &LossPanel, spec: &KernelSpec, i: usize) -> Result<TestReport> {
    let n = panel.n_units();
    if i >= n {
        return Err(EpaError::InvalidArgument(format!("unit {i} out of range")));
    }
    let t = panel.n_periods() as f64;
    let dm = panel.demean_by_unit();
    let var = lrv_per_unit(&dm, spec, i)?;
    if var <= 0.0 {
        return Err(EpaError::degenerate_at_unit(i));
    }
    let statistic = t.sqrt() * dm.unit_means()[i] / var.sqrt();
    Ok(TestReport::normal(format!("DM[{i}]"), statistic, "per_unit_hac"))
}

fn cross_section_variance(panel: &LossPanel, spec: &KernelSpec, dist: Option<&DistanceMatrix>) -> Result<f64> {
    // T = 1 special case: the long-run variances are replaced by the
    // cross-sectional (co)variances of the single observation column.
    let n = panel.n_units();
    let gm = panel.grand_mean();
    let x: Vec<f64> = (0..n).map(|i| panel.values()[(i, 0)] - gm).collect();
    let value = match dist {
        None => x.iter().map(|v| v * v).sum::<f64>() / n as f64,
        Some(d) => {
            if d.n_units() != n {
                return Err(EpaError::Shape("distance matrix does not match panel".into()));
            }
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += spec.space_weight(d.get(i, j)) * x[i] * x[j];
                }
            }
            acc / n as f64
        }
    };
    if value <= 0.0 {
        return Err(EpaError::degenerate());
    }
    Ok(value)
}

/// Overall EPA test: `grand mean / (sigma_hat / sqrt(nT))` for the
/// sqrt(nT)-rate estimators, `grand mean / (sigma_hat / sqrt(T))` for the
/// sqrt(T)-rate ones.
pub fn overall_test(
    panel: &LossPanel,
    spec: &KernelSpec,
    estimator: OverallEstimator<'_>,
) -> Result<TestReport> {
    let n = panel.n_units() as f64;
    let t = panel.n_periods() as f64;
    let gm = panel.grand_mean();

    if panel.n_periods() == 1 {
        // single cross-section; only the sqrt(nT) tests apply
        let (name, value) = match estimator {
            OverallEstimator::S1 => ("S1", cross_section_variance(panel, spec, None)?),
            OverallEstimator::S2 { dist } => ("S2", cross_section_variance(panel, spec, Some(dist))?),
            _ => {
                return Err(EpaError::Infeasible(
                    "only S1 and S2 are defined for a single cross-section".into(),
                ))
            }
        };
        let statistic = gm / (value.sqrt() / n.sqrt());
        let mut report = TestReport::normal(name, statistic, "cross_section");
        report.notes.push("T=1: cross-sectional variance used".into());
        return Ok(report);
    }

    let dm = panel.demean_by_unit();
    let (name, lrv): (&str, ScalarLrv) = match estimator {
        OverallEstimator::S1 => ("S1", lrv_avg(&dm, spec)?),
        OverallEstimator::S2 { dist } => ("S2", lrv_shac(&dm, spec, dist)?),
        OverallEstimator::S2Partial => ("S2_partial", lrv_partial_sample(&dm, spec)?),
        OverallEstimator::S3 => ("S3", lrv_dk(&dm, spec)?),
        OverallEstimator::S4 { fit, idio } => ("S4", lrv_factor(&dm, spec, fit, idio)?),
    };
    let scale = match lrv.rate {
        crate::variance::Rate::SqrtNT => (n * t).sqrt(),
        crate::variance::Rate::SqrtT => t.sqrt(),
    };
    let statistic = gm / (lrv.value.sqrt() / scale);
    Ok(TestReport::normal(name, statistic, lrv.estimator_name()))
}

/// Joint EPA test `T * mean' Omega^{-1} mean`, chi-square with n degrees of
/// freedom.
pub fn joint_test(
    panel: &LossPanel,
    spec: &KernelSpec,
    estimator: JointEstimator<'_>,
) -> Result<TestReport> {
    let n = panel.n_units();
    let t = panel.n_periods() as f64;
    let dm = panel.demean_by_unit();
    let means: DVector<f64> = panel.unit_means();

    let (name, omega, heuristic_df) = match estimator {
        JointEstimator::J1 => ("J1", cov_omega1(&dm, spec)?, false),
        JointEstimator::J2 { dist } => ("J2", cov_omega2(&dm, spec, dist)?, true),
        JointEstimator::J3 => ("J3", cov_omega3(&dm, spec)?, false),
        JointEstimator::J4 { fit, resid_cov } => ("J4", cov_omega4(&dm, spec, fit, resid_cov)?, true),
    };
    let statistic = t * omega.quad_form_inv(&means)?;
    let mut report = TestReport::chi_square(name, statistic, n, omega.estimator().as_str())?;
    if heuristic_df {
        report.notes.push("chi-square reference used as in the Monte Carlo; asymptotic validity not established".into());
    }
    Ok(report)
}

/// Standardized joint statistic `(J - n)/sqrt(2n)`, compared against the
/// standard normal (two-sided).
pub fn standardized_joint(j_report: &TestReport, n: usize) -> Result<TestReport> {
    if !matches!(j_report.distribution, Distribution::ChiSquare(_)) {
        return Err(EpaError::InvalidArgument("standardization expects a chi-square joint test".into()));
    }
    let statistic = (j_report.statistic - n as f64) / (2.0 * n as f64).sqrt();
    let name = j_report.name.replacen('J', "Z", 1);
    let mut report = TestReport::normal(name, statistic, j_report.variance_provenance.clone());
    report.notes = j_report.notes.clone();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::SpaceKernel;
    use crate::panel::LossKind;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Distribution as RandDistribution;
    use rand_distr::Normal as RandNormal;

    fn panel(rows: &[Vec<f64>]) -> LossPanel {
        LossPanel::from_rows(rows, LossKind::Quadratic).unwrap()
    }

    #[test]
    fn dm_zero_mean_row() {
        let p = panel(&[vec![1.0, -1.0, 1.0, -1.0]]);
        let spec = KernelSpec::bartlett(0, 1.0);
        let r = dm_unit_test(&p, &spec, 0).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dm_constant_row_degenerate() {
        let p = panel(&[vec![2.0, 2.0, 2.0]]);
        let spec = KernelSpec::bartlett(0, 1.0);
        assert!(matches!(dm_unit_test(&p, &spec, 0), Err(EpaError::DegenerateVariance(_))));
    }

    #[test]
    fn dm_clt_magnitude() {
        // N(1,1) series of length 400 gives a statistic near 20
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = RandNormal::new(1.0, 1.0).unwrap();
        let row: Vec<f64> = (0..400).map(|_| normal.sample(&mut rng)).collect();
        let p = panel(&[row]);
        let spec = KernelSpec::bartlett(0, 1.0);
        let r = dm_unit_test(&p, &spec, 0).unwrap();
        assert!((r.statistic - 20.0).abs() < 2.0, "statistic = {}", r.statistic);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn zero_panel_degenerate() {
        let p = panel(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        let spec = KernelSpec::bartlett(0, 1.0);
        assert!(overall_test(&p, &spec, OverallEstimator::S1).is_err());
    }

    #[test]
    fn s3_equals_s2_with_unit_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let normal = RandNormal::new(0.1, 1.0).unwrap();
        for trial in 0..100u64 {
            let n = 2 + (trial % 7) as usize;
            let t = 4 + (trial % 11) as usize;
            let rows: Vec<Vec<f64>> =
                (0..n).map(|_| (0..t).map(|_| normal.sample(&mut rng)).collect()).collect();
            let p = panel(&rows);
            let dist = DistanceMatrix::new(nalgebra::DMatrix::from_fn(n, n, |i, j| {
                i.abs_diff(j) as f64
            }))
            .unwrap();
            let unit_spec = KernelSpec {
                time_kernel: crate::kernels::TimeKernel::Bartlett,
                l_t: 1,
                space_kernel: SpaceKernel::Unit,
                d_n: 1.0,
            };
            let s2 = overall_test(&p, &unit_spec, OverallEstimator::S2 { dist: &dist }).unwrap();
            let s3 = overall_test(&p, &unit_spec, OverallEstimator::S3).unwrap();
            assert_relative_eq!(s2.statistic, s3.statistic, max_relative = 1e-12);
        }
    }

    #[test]
    fn joint_single_unit_is_squared_dm() {
        let p = panel(&[vec![0.4, -0.1, 0.3, 0.7, -0.2, 0.5]]);
        let spec = KernelSpec::bartlett(0, 1.0);
        let dm_stat = dm_unit_test(&p, &spec, 0).unwrap().statistic;
        let j = joint_test(&p, &spec, JointEstimator::J1).unwrap();
        assert_relative_eq!(j.statistic, dm_stat * dm_stat, max_relative = 1e-10);
        assert_eq!(j.df(), Some(1));
    }

    #[test]
    fn joint_identity_covariance_reduces_to_mean_norm() {
        // with Omega = I the statistic is T |mean|^2; approximate by a panel of
        // uncorrelated unit-variance rows and check the quad form path instead
        let p = panel(&[
            vec![1.0, -1.0, 0.5, -0.5],
            vec![0.5, -0.5, 1.0, -1.0],
        ]);
        let spec = KernelSpec::bartlett(0, 1.0);
        let dm = p.demean_by_unit();
        let omega = cov_omega1(&dm, &spec).unwrap();
        let means = p.unit_means();
        let qf = omega.quad_form_inv(&means).unwrap();
        let expect: f64 = (0..2)
            .map(|i| means[i] * means[i] / omega.values()[(i, i)])
            .sum();
        assert_relative_eq!(qf, expect, max_relative = 1e-12);
    }

    #[test]
    fn j3_infeasible_when_n_ge_t() {
        let p = panel(&[
            vec![1.0, -1.0],
            vec![0.3, 0.5],
            vec![-0.2, 0.8],
        ]);
        let spec = KernelSpec::bartlett(0, 1.0);
        match joint_test(&p, &spec, JointEstimator::J3) {
            Err(EpaError::Infeasible(msg)) => assert!(msg.contains("J3 infeasible")),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn z_affine_identity() {
        let j = TestReport::chi_square("J1", 10.0, 10, "omega1").unwrap();
        let z = standardized_joint(&j, 10).unwrap();
        assert_eq!(z.statistic, 0.0);
        assert_eq!(z.name, "Z1");
        let j2 = TestReport::chi_square("J2", 10.0 + (20.0f64).sqrt(), 10, "omega2").unwrap();
        let z2 = standardized_joint(&j2, 10).unwrap();
        assert_relative_eq!(z2.statistic, 1.0, max_relative = 1e-12);
        // bitwise identity given J
        assert_eq!(z2.statistic, (j2.statistic - 10.0) / 20.0f64.sqrt());
    }

    #[test]
    fn scale_invariance_of_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = RandNormal::new(0.2, 1.0).unwrap();
        let rows: Vec<Vec<f64>> =
            (0..4).map(|_| (0..12).map(|_| normal.sample(&mut rng)).collect()).collect();
        let scaled: Vec<Vec<f64>> =
            rows.iter().map(|r| r.iter().map(|v| 7.5 * v).collect()).collect();
        let p = panel(&rows);
        let ps = panel(&scaled);
        let spec = KernelSpec::bartlett(1, 2.0);
        let dist = DistanceMatrix::new(nalgebra::DMatrix::from_fn(4, 4, |i, j| {
            i.abs_diff(j) as f64
        }))
        .unwrap();

        for est in [
            OverallEstimator::S1,
            OverallEstimator::S2 { dist: &dist },
            OverallEstimator::S2Partial,
            OverallEstimator::S3,
        ] {
            let a = overall_test(&p, &spec, est).unwrap().statistic;
            let b = overall_test(&ps, &spec, est).unwrap().statistic;
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
        let a = joint_test(&p, &spec, JointEstimator::J3).unwrap().statistic;
        let b = joint_test(&ps, &spec, JointEstimator::J3).unwrap().statistic;
        assert_relative_eq!(a, b, max_relative = 1e-10);
    }

    #[test]
    fn single_cross_section_tests() {
        let p = panel(&[vec![0.5], vec![-0.2], vec![0.9], vec![0.1], vec![-0.4]]);
        let spec = KernelSpec::bartlett(0, 1.0);
        let s1 = overall_test(&p, &spec, OverallEstimator::S1).unwrap();
        assert!(s1.notes.iter().any(|n| n.contains("T=1")));
        let gm = p.grand_mean();
        let var: f64 =
            (0..5).map(|i| (p.values()[(i, 0)] - gm).powi(2)).sum::<f64>() / 5.0;
        assert_relative_eq!(s1.statistic, gm / (var / 5.0).sqrt(), max_relative = 1e-12);
        assert!(overall_test(&p, &spec, OverallEstimator::S3).is_err());
    }

    #[test]
    fn p_value_consistency() {
        let p = panel(&[
            vec![0.4, -0.1, 0.3, 0.7, -0.2, 0.5],
            vec![0.2, 0.6, -0.3, 0.1, 0.4, -0.5],
        ]);
        let spec = KernelSpec::bartlett(0, 1.0);
        let s = overall_test(&p, &spec, OverallEstimator::S1).unwrap();
        assert_abs_diff_eq!(s.p_value, normal_p(s.statistic, true), epsilon = 1e-10);
        let j = joint_test(&p, &spec, JointEstimator::J1).unwrap();
        assert_abs_diff_eq!(j.p_value, chisq_p(j.statistic, 2).unwrap(), epsilon = 1e-10);
    }
}
