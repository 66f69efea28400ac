//! Monte Carlo data generating processes and the replication harness for
//! size, power and size-adjusted power experiments.
//!
//! DGP1 pushes independent normal shocks through a spatial AR transform built
//! from a rook weight matrix on a square grid; DGP2 adds two common factors
//! on top of the spatially correlated idiosyncratic term. Replications are
//! independent tasks seeded from (seed, replication index) with a
//! counter-based ChaCha8 stream, so results are identical across runs and
//! thread counts; aggregation uses counts only.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as RandDistribution, Normal, Uniform};
use rayon::prelude::*;

use crate::epa_tests::{
    joint_test, overall_test, standardized_joint, Distribution, JointEstimator, OverallEstimator,
    TestReport,
};
use crate::error::{EpaError, Result};
use crate::factors::{pc_fit, FactorFit};
use crate::kernels::{default_space_bandwidth, KernelSpec};
use crate::panel::{DistanceMatrix, ErrorPanel, LossKind, LossPanel};
use crate::variance::{IdioEstimator, ResidCov};

/// Which data generating process to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dgp {
    /// Spatial dependence only, quadratic loss on generated forecast errors.
    Dgp1,
    /// Two common factors plus spatial idiosyncratic errors; loss
    /// differentials generated directly.
    Dgp2,
}

impl Dgp {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dgp::Dgp1 => "dgp1",
            Dgp::Dgp2 => "dgp2",
        }
    }
}

/// Alternative hypothesis injected into the DGP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    Null,
    /// Same accuracy shift for every unit; violates overall and joint EPA.
    Homogeneous,
    /// Unit-specific shifts averaging to zero; violates only joint EPA.
    Heterogeneous,
}

impl Alternative {
    pub fn as_str(&self) -> &'static str {
        match self {
            Alternative::Null => "null",
            Alternative::Homogeneous => "homogeneous",
            Alternative::Heterogeneous => "heterogeneous",
        }
    }
}

/// Simulation configuration.
#[derive(Debug, Clone)]
pub struct DgpConfig {
    pub dgp: Dgp,
    pub n: usize,
    pub t: usize,
    /// Spatial AR coefficient, |rho| < 1.
    pub rho: f64,
    pub alternative: Alternative,
    pub seed: u64,
    /// Scale of the DGP2 loss differential.
    pub phi: f64,
    /// Standard deviation of the DGP2 factor loadings around 1; the default
    /// gives variance 0.2.
    pub loading_sd: f64,
    /// Row-normalize the rook weight matrix (keeps I - rho W invertible for
    /// the whole |rho| < 1 range).
    pub row_normalize: bool,
}

impl DgpConfig {
    pub fn new(dgp: Dgp, n: usize, t: usize, rho: f64, alternative: Alternative, seed: u64) -> Self {
        Self {
            dgp,
            n,
            t,
            rho,
            alternative,
            seed,
            phi: 1.0 / 3.4,
            loading_sd: 0.2f64.sqrt(),
            row_normalize: true,
        }
    }
}

/// Grid coordinates, rook weights and the spatial AR transform.
#[derive(Debug, Clone)]
pub struct SpatialLayout {
    coords: Vec<(f64, f64)>,
    w: DMatrix<f64>,
    s: DMatrix<f64>,
    sbar2: f64,
}

impl SpatialLayout {
    /// Units are placed row-by-row on a `ceil(sqrt(n))` square grid; units at
    /// Euclidean distance <= 1 are neighbors. `W` is row-normalized and
    /// `S = (I - rho W)^{-1}` is evaluated at the given `rho`.
    pub fn build(n: usize, rho: f64) -> Result<Self> {
        Self::build_with_options(n, rho, true)
    }

    pub fn build_with_options(n: usize, rho: f64, row_normalize: bool) -> Result<Self> {
        if n == 0 {
            return Err(EpaError::InvalidArgument("n must be positive".into()));
        }
        if rho.abs() >= 1.0 {
            return Err(EpaError::InvalidArgument("|rho| must be < 1".into()));
        }
        let side = (n as f64).sqrt().ceil() as usize;
        let coords: Vec<(f64, f64)> =
            (0..n).map(|k| ((k % side) as f64, (k / side) as f64)).collect();
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j && euclid(coords[i], coords[j]) <= 1.0 {
                    w[(i, j)] = 1.0;
                }
            }
        }
        if row_normalize {
            for i in 0..n {
                let s: f64 = w.row(i).sum();
                if s > 0.0 {
                    w.row_mut(i).scale_mut(1.0 / s);
                }
            }
        }
        let s = (DMatrix::identity(n, n) - &w * rho)
            .try_inverse()
            .ok_or_else(|| EpaError::InvalidArgument("I - rho W is singular".into()))?;
        let sbar2 = s.iter().map(|v| v * v).sum::<f64>() / n as f64;
        Ok(Self { coords, w, s, sbar2 })
    }

    pub fn n_units(&self) -> usize {
        self.w.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn transform(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn sbar2(&self) -> f64 {
        self.sbar2
    }

    /// Correctly specified distance metric: the number of rook steps between
    /// grid positions (city-block distance), i.e. the shortest-path distance
    /// in the neighbor graph that generates the spatial dependence.
    pub fn grid_distances(&self) -> DistanceMatrix {
        let n = self.coords.len();
        DistanceMatrix::new(DMatrix::from_fn(n, n, |i, j| {
            let (xi, yi) = self.coords[i];
            let (xj, yj) = self.coords[j];
            (xi - xj).abs() + (yi - yj).abs()
        }))
        .expect("grid distances are symmetric and nonnegative")
    }
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Distances under the wrong assumption that units sit on a line: `|i - j|`.
pub fn misspecified_line_distances(n: usize) -> DistanceMatrix {
    DistanceMatrix::new(DMatrix::from_fn(n, n, |i, j| i.abs_diff(j) as f64))
        .expect("line distances are symmetric and nonnegative")
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, n: usize, t: usize) -> DMatrix<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut m = DMatrix::zeros(n, t);
    for s in 0..t {
        for i in 0..n {
            m[(i, s)] = normal.sample(rng);
        }
    }
    m
}

/// DGP1 draw: spatially correlated forecast-error panels under quadratic
/// loss. Returns the error panel (forecaster 1 vs. the comparison series)
/// and the implied loss differentials.
pub fn gen_dgp1(
    cfg: &DgpConfig,
    layout: &SpatialLayout,
    rng: &mut ChaCha8Rng,
) -> Result<(ErrorPanel, LossPanel)> {
    let (n, t) = (cfg.n, cfg.t);
    let scale = 1.0 / layout.sbar2().sqrt();
    let e1 = layout.transform() * standard_normal_matrix(rng, n, t) * scale;
    let e2 = layout.transform() * standard_normal_matrix(rng, n, t) * scale;
    let e_cmp = match cfg.alternative {
        Alternative::Null => e2,
        Alternative::Homogeneous => e2 * 1.2f64.sqrt(),
        Alternative::Heterogeneous => {
            let theta = Uniform::new(0.6, 1.4).expect("valid uniform");
            let mut e3 = e2;
            for i in 0..n {
                let scale_i: f64 = theta.sample(rng);
                let scale_i = scale_i.sqrt();
                e3.row_mut(i).scale_mut(scale_i);
            }
            e3
        }
    };
    let labels_u: Vec<String> = (1..=n).map(|k| format!("u{k}")).collect();
    let labels_t: Vec<String> = (1..=t).map(|k| format!("t{k}")).collect();
    let errors = ErrorPanel::new(e1, e_cmp, labels_u, labels_t)?;
    let loss = errors.loss_differential(LossKind::Quadratic)?;
    Ok((errors, loss))
}

/// DGP2 draw: loss differentials generated directly from two common factors
/// plus spatially correlated idiosyncratic errors.
pub fn gen_dgp2(cfg: &DgpConfig, layout: &SpatialLayout, rng: &mut ChaCha8Rng) -> Result<LossPanel> {
    let (n, t) = (cfg.n, cfg.t);
    let loading = Normal::new(1.0, cfg.loading_sd).expect("valid normal");
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let lambda1: Vec<f64> = (0..n).map(|_| loading.sample(rng)).collect();
    let lambda2: Vec<f64> = (0..n).map(|_| loading.sample(rng)).collect();
    let f1: Vec<f64> = (0..t).map(|_| normal.sample(rng)).collect();
    let f2: Vec<f64> = (0..t).map(|_| normal.sample(rng)).collect();
    let eps = layout.transform() * standard_normal_matrix(rng, n, t) / layout.sbar2().sqrt();
    let mu: Vec<f64> = match cfg.alternative {
        Alternative::Null => vec![0.0; n],
        Alternative::Homogeneous => vec![1.2; n],
        Alternative::Heterogeneous => {
            let u = Uniform::new(-0.4, 0.4).expect("valid uniform");
            (0..n).map(|_| u.sample(rng)).collect()
        }
    };
    let dl = DMatrix::from_fn(n, t, |i, s| {
        cfg.phi * (mu[i] + lambda1[i] * f1[s] + lambda2[i] * f2[s] + eps[(i, s)])
    });
    LossPanel::new(dl, LossKind::Quadratic)
}

/// Tests the harness knows how to run, including the distance-metric
/// variants reported in the experiments ("mis" = misspecified line
/// distances, "partial" = partial-sample variance).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestId {
    S1,
    S2Correct,
    S2Mis,
    S2Partial,
    S3,
    S4Correct,
    S4Mis,
    S4Partial,
    J1,
    J2Correct,
    J2Mis,
    J3,
    J4Correct,
    J4Mis,
    Z1,
    Z2Correct,
    Z2Mis,
    Z4Correct,
    Z4Mis,
}

impl TestId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TestId::S1 => "S1",
            TestId::S2Correct => "S2",
            TestId::S2Mis => "S2_ms",
            TestId::S2Partial => "S2_ps",
            TestId::S3 => "S3",
            TestId::S4Correct => "S4",
            TestId::S4Mis => "S4_ms",
            TestId::S4Partial => "S4_ps",
            TestId::J1 => "J1",
            TestId::J2Correct => "J2",
            TestId::J2Mis => "J2_ms",
            TestId::J3 => "J3",
            TestId::J4Correct => "J4",
            TestId::J4Mis => "J4_ms",
            TestId::Z1 => "Z1",
            TestId::Z2Correct => "Z2",
            TestId::Z2Mis => "Z2_ms",
            TestId::Z4Correct => "Z4",
            TestId::Z4Mis => "Z4_ms",
        }
    }

    pub fn parse(s: &str) -> Option<TestId> {
        let all = [
            TestId::S1,
            TestId::S2Correct,
            TestId::S2Mis,
            TestId::S2Partial,
            TestId::S3,
            TestId::S4Correct,
            TestId::S4Mis,
            TestId::S4Partial,
            TestId::J1,
            TestId::J2Correct,
            TestId::J2Mis,
            TestId::J3,
            TestId::J4Correct,
            TestId::J4Mis,
            TestId::Z1,
            TestId::Z2Correct,
            TestId::Z2Mis,
            TestId::Z4Correct,
            TestId::Z4Mis,
        ];
        all.into_iter().find(|t| t.as_str().eq_ignore_ascii_case(s))
    }

    fn needs_factors(&self) -> bool {
        matches!(
            self,
            TestId::S4Correct
                | TestId::S4Mis
                | TestId::S4Partial
                | TestId::J4Correct
                | TestId::J4Mis
                | TestId::Z4Correct
                | TestId::Z4Mis
        )
    }
}

/// Number of factors assumed by the factor-robust tests in the experiments
/// (the DGP2 truth).
pub const SIMULATION_FACTOR_COUNT: usize = 2;

struct RepContext {
    panel: LossPanel,
    spec: KernelSpec,
    dist_correct: DistanceMatrix,
    dist_mis: DistanceMatrix,
    fit: Option<FactorFit>,
}

impl RepContext {
    fn evaluate(&self, test: TestId) -> Result<TestReport> {
        let fit = |t: TestId| -> Result<&FactorFit> {
            self.fit.as_ref().ok_or_else(|| {
                EpaError::InvalidArgument(format!("{} requires a factor fit", t.as_str()))
            })
        };
        match test {
            TestId::S1 => overall_test(&self.panel, &self.spec, OverallEstimator::S1),
            TestId::S2Correct => {
                overall_test(&self.panel, &self.spec, OverallEstimator::S2 { dist: &self.dist_correct })
            }
            TestId::S2Mis => {
                overall_test(&self.panel, &self.spec, OverallEstimator::S2 { dist: &self.dist_mis })
            }
            TestId::S2Partial => overall_test(&self.panel, &self.spec, OverallEstimator::S2Partial),
            TestId::S3 => overall_test(&self.panel, &self.spec, OverallEstimator::S3),
            TestId::S4Correct => overall_test(
                &self.panel,
                &self.spec,
                OverallEstimator::S4 {
                    fit: fit(test)?,
                    idio: IdioEstimator::Shac(&self.dist_correct),
                },
            ),
            TestId::S4Mis => overall_test(
                &self.panel,
                &self.spec,
                OverallEstimator::S4 { fit: fit(test)?, idio: IdioEstimator::Shac(&self.dist_mis) },
            ),
            TestId::S4Partial => overall_test(
                &self.panel,
                &self.spec,
                OverallEstimator::S4 { fit: fit(test)?, idio: IdioEstimator::PartialSample },
            ),
            TestId::J1 => joint_test(&self.panel, &self.spec, JointEstimator::J1),
            TestId::J2Correct => {
                joint_test(&self.panel, &self.spec, JointEstimator::J2 { dist: &self.dist_correct })
            }
            TestId::J2Mis => {
                joint_test(&self.panel, &self.spec, JointEstimator::J2 { dist: &self.dist_mis })
            }
            TestId::J3 => joint_test(&self.panel, &self.spec, JointEstimator::J3),
            TestId::J4Correct => joint_test(
                &self.panel,
                &self.spec,
                JointEstimator::J4 {
                    fit: fit(test)?,
                    resid_cov: ResidCov::Spatial(&self.dist_correct),
                },
            ),
            TestId::J4Mis => joint_test(
                &self.panel,
                &self.spec,
                JointEstimator::J4 { fit: fit(test)?, resid_cov: ResidCov::Spatial(&self.dist_mis) },
            ),
            TestId::Z1 => {
                let j = self.evaluate(TestId::J1)?;
                standardized_joint(&j, self.panel.n_units())
            }
            TestId::Z2Correct => {
                let j = self.evaluate(TestId::J2Correct)?;
                standardized_joint(&j, self.panel.n_units())
            }
            TestId::Z2Mis => {
                let j = self.evaluate(TestId::J2Mis)?;
                standardized_joint(&j, self.panel.n_units())
            }
            TestId::Z4Correct => {
                let j = self.evaluate(TestId::J4Correct)?;
                standardized_joint(&j, self.panel.n_units())
            }
            TestId::Z4Mis => {
                let j = self.evaluate(TestId::J4Mis)?;
                standardized_joint(&j, self.panel.n_units())
            }
        }
    }
}

fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&rep.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn make_context(
    cfg: &DgpConfig,
    layout: &SpatialLayout,
    need_factors: bool,
    rep: u64,
) -> Result<RepContext> {
    let mut rng = rep_rng(cfg.seed, rep);
    let panel = match cfg.dgp {
        Dgp::Dgp1 => gen_dgp1(cfg, layout, &mut rng)?.1,
        Dgp::Dgp2 => gen_dgp2(cfg, layout, &mut rng)?,
    };
    // one-step-ahead experiments: time bandwidth 0, spatial bandwidth
    // ceil(n^(1/4)), Bartlett kernels throughout
    let spec = KernelSpec::bartlett(0, default_space_bandwidth(cfg.n));
    let fit = if need_factors {
        Some(pc_fit(&panel.demean_by_unit(), SIMULATION_FACTOR_COUNT)?)
    } else {
        None
    };
    Ok(RepContext {
        panel,
        spec,
        dist_correct: layout.grid_distances(),
        dist_mis: misspecified_line_distances(cfg.n),
        fit,
    })
}

/// Per-test rejection and failure counts from one experiment.
#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub test: TestId,
    pub rejections: usize,
    pub failures: usize,
}

impl TestOutcome {
    pub fn rejection_rate(&self, reps: usize) -> f64 {
        self.rejections as f64 / reps as f64
    }
}

/// Result of [`run_experiment`]: rejection rates per requested test.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: DgpConfig,
    pub nominal: f64,
    pub reps: usize,
    pub outcomes: Vec<TestOutcome>,
}

impl ExperimentResult {
    pub fn rate(&self, test: TestId) -> Option<f64> {
        self.outcomes.iter().find(|o| o.test == test).map(|o| o.rejection_rate(self.reps))
    }

    /// CSV rows: `test,n,T,dgp,rho,alternative,reps,rejection_rate,failures`.
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "test,n,T,dgp,rho,alternative,reps,rejection_rate,failures")?;
        }
        for o in &self.outcomes {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.4},{}",
                o.test.as_str(),
                self.config.n,
                self.config.t,
                self.config.dgp.as_str(),
                self.config.rho,
                self.config.alternative.as_str(),
                self.reps,
                o.rejection_rate(self.reps),
                o.failures
            )?;
        }
        Ok(())
    }
}

/// Run `reps` replications of the configured DGP and report, for every
/// requested test, the fraction of replications with p-value below
/// `nominal`. Failed replications (degenerate variance, infeasible test)
/// are counted separately, never silently dropped.
pub fn run_experiment(
    cfg: &DgpConfig,
    tests: &[TestId],
    reps: usize,
    nominal: f64,
) -> Result<ExperimentResult> {
    if reps == 0 {
        return Err(EpaError::InvalidArgument("reps must be positive".into()));
    }
    let layout = SpatialLayout::build_with_options(cfg.n, cfg.rho, cfg.row_normalize)?;
    let need_factors = tests.iter().any(|t| t.needs_factors());

    let counts: Vec<(usize, usize)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut local = vec![(0usize, 0usize); tests.len()];
            match make_context(cfg, &layout, need_factors, rep) {
                Ok(ctx) => {
                    for (k, &test) in tests.iter().enumerate() {
                        match ctx.evaluate(test) {
                            Ok(report) => {
                                if report.p_value < nominal {
                                    local[k].0 += 1;
                                }
                            }
                            Err(_) => local[k].1 += 1,
                        }
                    }
                }
                Err(_) => {
                    for slot in local.iter_mut() {
                        slot.1 += 1;
                    }
                }
            }
            local
        })
        .reduce(
            || vec![(0usize, 0usize); tests.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        );

    let outcomes = tests
        .iter()
        .zip(counts)
        .map(|(&test, (rejections, failures))| TestOutcome { test, rejections, failures })
        .collect();
    Ok(ExperimentResult { config: cfg.clone(), nominal, reps, outcomes })
}

fn collect_statistics(
    cfg: &DgpConfig,
    test: TestId,
    reps: usize,
) -> Result<(Vec<f64>, Option<Distribution>)> {
    let layout = SpatialLayout::build_with_options(cfg.n, cfg.rho, cfg.row_normalize)?;
    let need_factors = test.needs_factors();
    let stats: Vec<Option<(f64, Distribution)>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            make_context(cfg, &layout, need_factors, rep)
                .and_then(|ctx| ctx.evaluate(test))
                .ok()
                .map(|r| (r.statistic, r.distribution))
        })
        .collect();
    let mut dist = None;
    let mut values = Vec::with_capacity(reps);
    for s in stats.into_iter().flatten() {
        dist = Some(s.1);
        values.push(s.0);
    }
    Ok((values, dist))
}

/// Size-adjusted power: the empirical `1 - nominal` critical value is taken
/// from the null draws (absolute statistics for normal tests, raw for
/// chi-square) and power is the fraction of alternative draws beyond it.
pub fn size_adjusted_power(
    cfg_null: &DgpConfig,
    cfg_alt: &DgpConfig,
    test: TestId,
    reps: usize,
    nominal: f64,
) -> Result<f64> {
    if reps < 100 {
        return Err(EpaError::InvalidArgument(
            "size-adjusted power needs at least 100 replications".into(),
        ));
    }
    let (null_stats, dist) = collect_statistics(cfg_null, test, reps)?;
    let (alt_stats, _) = collect_statistics(cfg_alt, test, reps)?;
    if null_stats.is_empty() || alt_stats.is_empty() {
        return Err(EpaError::degenerate());
    }
    let two_sided = matches!(dist, Some(Distribution::StdNormal));
    let transform = |v: f64| if two_sided { v.abs() } else { v };
    let mut sorted: Vec<f64> = null_stats.iter().map(|&v| transform(v)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    // nearest-rank upper quantile
    let k = ((1.0 - nominal) * sorted.len() as f64).ceil().max(1.0) as usize;
    let crit = sorted[(k - 1).min(sorted.len() - 1)];
    let beyond = alt_stats.iter().filter(|&&v| transform(v) > crit).count();
    Ok(beyond as f64 / alt_stats.len() as f64)
}
