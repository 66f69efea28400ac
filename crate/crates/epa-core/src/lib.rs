//! Panel-data forecast comparison: equal-predictive-ability tests that stay
//! valid under cross-sectional dependence.
//!
//! The crate compares two forecast series observed over `n` units and `T`
//! periods. Loss differentials are reduced either to a single overall
//! statistic (is average accuracy the same?) or to a joint statistic (is
//! accuracy the same for every unit?), with long-run variances estimated
//! under several dependence assumptions:
//!
//! - [`epa_tests`] — overall tests S1-S4, joint tests J1-J4 and their
//!   standardized Z versions, plus the per-unit Diebold-Mariano test;
//! - [`variance`] — HAC, spatial HAC, partial-sample, cross-sectional
//!   average and factor-based long-run variance estimators;
//! - [`factors`] — principal-components factor estimation and selection;
//! - [`cd_tests`] — cross-sectional dependence pretests (LM and its
//!   bias-corrected variant);
//! - [`simulate`] — the Monte Carlo DGPs and replication harness used by the
//!   acceptance experiments;
//! - [`panel`], [`kernels`], [`pvalues`], [`error`] — supporting types.

pub mod cd_tests;
pub mod epa_tests;
pub mod error;
pub mod factors;
pub mod kernels;
pub mod panel;
pub mod pvalues;
pub mod simulate;
pub mod variance;

pub use cd_tests::{bp_lm, bp_lm_bias_corrected, CdReport};
pub use epa_tests::{
    dm_unit_test, joint_test, overall_test, standardized_joint, Distribution, JointEstimator,
    OverallEstimator, TestReport,
};
pub use error::{EpaError, Result};
pub use factors::{defactor, pc_fit, select_num_factors, FactorFit};
pub use kernels::{
    default_space_bandwidth, default_time_bandwidth, KernelSpec, SpaceKernel, TimeKernel,
};
pub use panel::{DemeanedPanel, DistanceMatrix, ErrorPanel, LossKind, LossPanel};
pub use simulate::{
    gen_dgp1, gen_dgp2, misspecified_line_distances, run_experiment, size_adjusted_power,
    Alternative, Dgp, DgpConfig, ExperimentResult, SpatialLayout, TestId,
};
pub use variance::{
    cov_omega1, cov_omega2, cov_omega3, cov_omega4, lrv_avg, lrv_dk, lrv_factor,
    lrv_partial_sample, lrv_per_unit, lrv_series, lrv_shac, partial_sample_size, CovMatrix,
    IdioEstimator, OmegaKind, ResidCov, ScalarLrv,
};
