//! Command-line front end for the panel EPA tests: per-unit DM tests,
//! overall and joint tests with selectable variance estimators,
//! cross-sectional dependence pretests and the Monte Carlo driver.

mod config;
mod error;
mod io;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use epa_core::kernels::{SpaceKernel, TimeKernel};
use epa_core::{
    bp_lm, bp_lm_bias_corrected, default_space_bandwidth, dm_unit_test, joint_test, overall_test,
    pc_fit, select_num_factors, standardized_joint, Alternative, Dgp, DgpConfig, DistanceMatrix,
    ErrorPanel, IdioEstimator, JointEstimator, KernelSpec, LossKind, LossPanel, OverallEstimator,
    ResidCov, TestId,
};

use config::ConfigFile;
use error::{CliError, Result};
use report::{Manifest, ReportRow};

#[derive(Parser)]
#[command(
    name = "epa",
    version,
    about = "Equal-predictive-ability tests for panels of forecasts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-unit Diebold-Mariano tests.
    Dm(DmArgs),
    /// Overall EPA test (average accuracy across all units).
    Overall(OverallArgs),
    /// Joint EPA test (per-unit accuracy, chi-square or standardized).
    Joint(JointArgs),
    /// Cross-sectional dependence pretests on the loss differentials.
    Cd(CdArgs),
    /// Monte Carlo size/power experiments.
    Simulate(SimArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Long-format CSV with columns unit,time,e1,e2.
    #[arg(long)]
    input: PathBuf,
    /// Loss function applied to the forecast errors.
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    /// Time-kernel bandwidth l_T (0 for one-step-ahead forecasts).
    #[arg(long)]
    lt: Option<usize>,
    /// Write <prefix>.csv, <prefix>.txt and <prefix>_manifest.json.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Key = value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Quadratic,
    Absolute,
}

impl std::str::FromStr for LossArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "quadratic" => Ok(LossArg::Quadratic),
            "absolute" => Ok(LossArg::Absolute),
            other => Err(format!("unknown loss '{other}'")),
        }
    }
}

#[derive(Args, Debug)]
struct DmArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OverallEstimatorArg {
    S1,
    S2,
    S2Partial,
    S3,
    S4,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum IdioArg {
    Shac,
    Partial,
    Diagonal,
}

#[derive(Args, Debug)]
struct OverallArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    estimator: OverallEstimatorArg,
    /// Distance CSV (unit column + one column per unit), required for s2 and
    /// the shac idiosyncratic estimator of s4.
    #[arg(long)]
    distances: Option<PathBuf>,
    /// Spatial bandwidth d_n; default is a distance quantile when distances
    /// are given, ceil(n^(1/4)) otherwise.
    #[arg(long)]
    d_n: Option<f64>,
    /// Quantile of the off-diagonal distances used as d_n (default 0.25).
    #[arg(long)]
    d_quantile: Option<f64>,
    /// Number of common factors for s4; omit to select by information
    /// criterion.
    #[arg(long)]
    m: Option<usize>,
    /// Upper bound for factor-count selection.
    #[arg(long)]
    m_max: Option<usize>,
    /// Idiosyncratic-variance estimator inside s4.
    #[arg(long, value_enum)]
    idio: Option<IdioArg>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum JointEstimatorArg {
    J1,
    J2,
    J3,
    J4,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ResidCovArg {
    Spatial,
    Unit,
    Diagonal,
}

#[derive(Args, Debug)]
struct JointArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    estimator: JointEstimatorArg,
    #[arg(long)]
    distances: Option<PathBuf>,
    #[arg(long)]
    d_n: Option<f64>,
    #[arg(long)]
    d_quantile: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    m_max: Option<usize>,
    /// Residual covariance estimator inside j4.
    #[arg(long, value_enum)]
    resid_cov: Option<ResidCovArg>,
    /// Also report the standardized statistic Z = (J - n)/sqrt(2n).
    #[arg(long)]
    standardized: bool,
}

#[derive(Args, Debug)]
struct CdArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Use the plain standardized LM instead of the bias-corrected one.
    #[arg(long)]
    no_bias_correction: bool,
    /// Remove this many principal-component factors before testing.
    #[arg(long)]
    defactor: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum DgpArg {
    Dgp1,
    Dgp2,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AlternativeArg {
    Null,
    Homogeneous,
    Heterogeneous,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long, value_enum)]
    dgp: DgpArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    t: usize,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum)]
    alternative: Option<AlternativeArg>,
    /// Comma-separated test names, e.g. S1,S2,S3,J1,Z2.
    #[arg(long)]
    tests: String,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    nominal: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dm(args) => run_dm(args),
        Command::Overall(args) => run_overall(args),
        Command::Joint(args) => run_joint(args),
        Command::Cd(args) => run_cd(args),
        Command::Simulate(args) => run_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

struct PanelInputs {
    panel: LossPanel,
    errors: ErrorPanel,
    lt: usize,
    output: Option<PathBuf>,
    canonical: String,
}

fn load_inputs(common: &CommonArgs) -> Result<PanelInputs> {
    let cfg = ConfigFile::load(common.config.as_deref())?;
    let loss = cfg.resolve(common.loss, "loss", LossArg::Quadratic)?;
    let lt = cfg.resolve(common.lt, "lt", 0usize)?;
    let errors = io::ingest_long_csv(&common.input)?;
    let kind = match loss {
        LossArg::Quadratic => LossKind::Quadratic,
        LossArg::Absolute => LossKind::Absolute,
    };
    let panel = errors.loss_differential(kind)?;
    Ok(PanelInputs {
        panel,
        errors,
        lt,
        output: common.output.clone(),
        canonical: format!("input={:?} loss={loss:?} lt={lt}", common.input),
    })
}

fn emit(
    title: &str,
    rows: &[ReportRow],
    output: Option<&PathBuf>,
    seed: Option<u64>,
    canonical: &str,
) -> Result<()> {
    let text = report::rows_to_text(title, rows);
    print!("{text}");
    if let Some(prefix) = output {
        let manifest = Manifest::new(seed, canonical);
        report::write_outputs(prefix, &report::rows_to_csv(rows), &text, &manifest)?;
        println!("config hash: {}", manifest.config_hash);
    }
    Ok(())
}

fn run_dm(args: DmArgs) -> Result<()> {
    let inputs = load_inputs(&args.common)?;
    let spec = KernelSpec::bartlett(inputs.lt, 1.0);
    let mut rows = Vec::new();
    for i in 0..inputs.panel.n_units() {
        let mut report = dm_unit_test(&inputs.panel, &spec, i)?;
        report.name = format!("DM[{}]", inputs.errors.unit_labels()[i]);
        rows.push(ReportRow::from(&report));
    }
    emit("Per-unit DM tests", &rows, inputs.output.as_ref(), None, &inputs.canonical)
}

/// Resolve distances and spatial bandwidth from the flags: an explicit d_n
/// wins, then a distance quantile, then the ceil(n^(1/4)) rule.
fn spatial_setup(
    distances: Option<&PathBuf>,
    d_n: Option<f64>,
    d_quantile: Option<f64>,
    errors: &ErrorPanel,
) -> Result<(Option<DistanceMatrix>, f64)> {
    let dist = distances
        .map(|p| io::ingest_distance_csv(p, errors.unit_labels()))
        .transpose()?;
    let bandwidth = match (d_n, &dist) {
        (Some(v), _) if v > 0.0 => v,
        (Some(v), _) => return Err(CliError::input(format!("d_n must be positive, got {v}"))),
        (None, Some(d)) => io::bandwidth_from_quantile(d, d_quantile.unwrap_or(0.25))?,
        (None, None) => default_space_bandwidth(errors.n_units()),
    };
    Ok((dist, bandwidth))
}

fn factor_fit(
    panel: &LossPanel,
    m: Option<usize>,
    m_max: Option<usize>,
) -> Result<(epa_core::FactorFit, usize)> {
    let dm = panel.demean_by_unit();
    let cap = panel.n_units().min(panel.n_periods());
    let m = match m {
        Some(m) => m,
        None => select_num_factors(&dm, m_max.unwrap_or(8).min(cap))?,
    };
    Ok((pc_fit(&dm, m)?, m))
}

fn run_overall(args: OverallArgs) -> Result<()> {
    let inputs = load_inputs(&args.common)?;
    let (dist, d_n) =
        spatial_setup(args.distances.as_ref(), args.d_n, args.d_quantile, &inputs.errors)?;
    let spec = KernelSpec::bartlett(inputs.lt, d_n);
    let need_dist = || {
        dist.as_ref()
            .ok_or_else(|| CliError::input("this estimator requires --distances".into()))
    };

    let (report, m_used) = match args.estimator {
        OverallEstimatorArg::S1 => (overall_test(&inputs.panel, &spec, OverallEstimator::S1)?, None),
        OverallEstimatorArg::S2 => (
            overall_test(&inputs.panel, &spec, OverallEstimator::S2 { dist: need_dist()? })?,
            None,
        ),
        OverallEstimatorArg::S2Partial => {
            (overall_test(&inputs.panel, &spec, OverallEstimator::S2Partial)?, None)
        }
        OverallEstimatorArg::S3 => (overall_test(&inputs.panel, &spec, OverallEstimator::S3)?, None),
        OverallEstimatorArg::S4 => {
            let (fit, m) = factor_fit(&inputs.panel, args.m, args.m_max)?;
            let idio = match args.idio.unwrap_or(IdioArg::Partial) {
                IdioArg::Shac => IdioEstimator::Shac(need_dist()?),
                IdioArg::Partial => IdioEstimator::PartialSample,
                IdioArg::Diagonal => IdioEstimator::Diagonal,
            };
            (overall_test(&inputs.panel, &spec, OverallEstimator::S4 { fit: &fit, idio })?, Some(m))
        }
    };
    let mut rows = vec![ReportRow::from(&report)];
    if let Some(m) = m_used {
        rows[0].notes = join_notes(&rows[0].notes, &format!("{m} factors used"));
    }
    let canonical = format!("overall {:?} {}", args.estimator, inputs.canonical);
    emit("Overall EPA test", &rows, inputs.output.as_ref(), None, &canonical)
}

fn join_notes(existing: &str, extra: &str) -> String {
    if existing.is_empty() {
        extra.to_string()
    } else {
        format!("{existing}; {extra}")
    }
}

fn run_joint(args: JointArgs) -> Result<()> {
    let inputs = load_inputs(&args.common)?;
    let (dist, d_n) =
        spatial_setup(args.distances.as_ref(), args.d_n, args.d_quantile, &inputs.errors)?;
    let spec = KernelSpec::bartlett(inputs.lt, d_n);
    let need_dist = || {
        dist.as_ref()
            .ok_or_else(|| CliError::input("this estimator requires --distances".into()))
    };

    let report = match args.estimator {
        JointEstimatorArg::J1 => joint_test(&inputs.panel, &spec, JointEstimator::J1)?,
        JointEstimatorArg::J2 => {
            joint_test(&inputs.panel, &spec, JointEstimator::J2 { dist: need_dist()? })?
        }
        JointEstimatorArg::J3 => joint_test(&inputs.panel, &spec, JointEstimator::J3)?,
        JointEstimatorArg::J4 => {
            let (fit, _) = factor_fit(&inputs.panel, args.m, args.m_max)?;
            let resid_cov = match args.resid_cov.unwrap_or(ResidCovArg::Diagonal) {
                ResidCovArg::Spatial => ResidCov::Spatial(need_dist()?),
                ResidCovArg::Unit => ResidCov::Unit,
                ResidCovArg::Diagonal => ResidCov::Diagonal,
            };
            joint_test(&inputs.panel, &spec, JointEstimator::J4 { fit: &fit, resid_cov })?
        }
    };
    let mut rows = vec![ReportRow::from(&report)];
    if args.standardized {
        let z = standardized_joint(&report, inputs.panel.n_units())?;
        rows.push(ReportRow::from(&z));
    }
    let canonical = format!("joint {:?} {}", args.estimator, inputs.canonical);
    emit("Joint EPA test", &rows, inputs.output.as_ref(), None, &canonical)
}

fn run_cd(args: CdArgs) -> Result<()> {
    let inputs = load_inputs(&args.common)?;
    let (values, defactored, m_used);
    match args.defactor {
        Some(m) if m > 0 => {
            let dm = inputs.panel.demean_by_unit();
            values = epa_core::defactor(&dm, m)?;
            defactored = true;
            m_used = m;
        }
        _ => {
            values = inputs.panel.values().clone();
            defactored = false;
            m_used = 0;
        }
    }
    let mut reports = vec![
        bp_lm(&values)?,
        bp_lm_bias_corrected(&values, !args.no_bias_correction)?,
    ];
    for r in reports.iter_mut() {
        r.defactored = defactored;
        r.m_used = m_used;
    }
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    let canonical = format!("cd defactor={m_used} {}", inputs.canonical);
    emit("Cross-sectional dependence pretests", &rows, inputs.output.as_ref(), None, &canonical)
}

fn run_simulate(args: SimArgs) -> Result<()> {
    let cfg_file = ConfigFile::load(args.config.as_deref())?;
    let rho = cfg_file.resolve(args.rho, "rho", 0.5)?;
    let reps = cfg_file.resolve(args.reps, "reps", 2000usize)?;
    let nominal = cfg_file.resolve(args.nominal, "nominal", 0.05)?;
    let seed = cfg_file.resolve(args.seed, "seed", 42u64)?;
    let alternative = match args.alternative.unwrap_or(AlternativeArg::Null) {
        AlternativeArg::Null => Alternative::Null,
        AlternativeArg::Homogeneous => Alternative::Homogeneous,
        AlternativeArg::Heterogeneous => Alternative::Heterogeneous,
    };
    let dgp = match args.dgp {
        DgpArg::Dgp1 => Dgp::Dgp1,
        DgpArg::Dgp2 => Dgp::Dgp2,
    };
    let tests: Vec<TestId> = args
        .tests
        .split(',')
        .map(|name| {
            TestId::parse(name.trim())
                .ok_or_else(|| CliError::input(format!("unknown test '{}'", name.trim())))
        })
        .collect::<Result<_>>()?;
    if tests.is_empty() {
        return Err(CliError::input("no tests requested".into()));
    }

    let cfg = DgpConfig::new(dgp, args.n, args.t, rho, alternative, seed);
    let result = epa_core::run_experiment(&cfg, &tests, reps, nominal)?;
    let mut csv = Vec::new();
    result
        .write_csv(&mut csv, true)
        .map_err(|e| CliError::input(format!("write failed: {e}")))?;
    let csv = String::from_utf8(csv).expect("CSV is UTF-8");
    print!("{csv}");
    if let Some(prefix) = &args.output {
        let canonical = format!(
            "simulate dgp={dgp:?} n={} t={} rho={rho} alt={alternative:?} reps={reps} nominal={nominal} tests={:?}",
            args.n, args.t, tests
        );
        let manifest = Manifest::new(Some(seed), &canonical);
        report::write_outputs(prefix, &csv, &csv, &manifest)?;
        println!("config hash: {}", manifest.config_hash);
    }
    Ok(())
}

// silence unused warnings for kernels re-exported for config completeness
#[allow(unused)]
fn _kernel_tags(_: TimeKernel, _: SpaceKernel) {}
