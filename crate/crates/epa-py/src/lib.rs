//! Python bindings: the main panel EPA operations exposed over plain lists
//! of floats, returning dictionaries.

use epa_core::kernels::{SpaceKernel, TimeKernel};
use epa_core::{
    Alternative, Dgp, DgpConfig, DistanceMatrix, EpaError, ErrorPanel, IdioEstimator,
    JointEstimator, KernelSpec, LossKind, LossPanel, OverallEstimator, ResidCov, TestId,
};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: EpaError) -> PyErr {
    match e {
        EpaError::DegenerateVariance(_)
        | EpaError::SingularCovariance
        | EpaError::IndefiniteCovariance
        | EpaError::EigenFailed => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err(format!("{what} must be a nonempty list of rows")));
    }
    let t = rows[0].len();
    if rows.iter().any(|r| r.len() != t) {
        return Err(PyValueError::new_err(format!("{what} rows must all have the same length")));
    }
    Ok(DMatrix::from_fn(rows.len(), t, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn loss_panel(rows: &[Vec<f64>]) -> PyResult<LossPanel> {
    LossPanel::new(matrix_from_rows(rows, "loss differentials")?, LossKind::Quadratic)
        .map_err(to_py_err)
}

fn loss_kind(name: &str) -> PyResult<LossKind> {
    match name {
        "quadratic" => Ok(LossKind::Quadratic),
        "absolute" => Ok(LossKind::Absolute),
        other => Err(PyValueError::new_err(format!("unknown loss '{other}'"))),
    }
}

fn distance_matrix(rows: Option<Vec<Vec<f64>>>) -> PyResult<Option<DistanceMatrix>> {
    rows.map(|r| DistanceMatrix::new(matrix_from_rows(&r, "distances")?).map_err(to_py_err))
        .transpose()
}

fn kernel_spec(lt: usize, d_n: Option<f64>, n: usize) -> KernelSpec {
    KernelSpec {
        time_kernel: TimeKernel::Bartlett,
        l_t: lt,
        space_kernel: SpaceKernel::Bartlett,
        d_n: d_n.unwrap_or_else(|| epa_core::default_space_bandwidth(n)),
    }
}

fn report_dict<'py>(py: Python<'py>, r: &epa_core::TestReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &r.name)?;
    d.set_item("statistic", r.statistic)?;
    d.set_item("p_value", r.p_value)?;
    d.set_item("two_sided", r.two_sided)?;
    match r.distribution {
        epa_core::Distribution::StdNormal => d.set_item("distribution", "normal")?,
        epa_core::Distribution::ChiSquare(df) => {
            d.set_item("distribution", "chi_square")?;
            d.set_item("df", df)?;
        }
    }
    d.set_item("variance", &r.variance_provenance)?;
    d.set_item("notes", r.notes.clone())?;
    Ok(d)
}

/// Loss differentials L(e1) - L(e2) for two forecast-error panels.
#[pyfunction]
#[pyo3(signature = (e1, e2, loss="quadratic"))]
fn loss_differential(e1: Vec<Vec<f64>>, e2: Vec<Vec<f64>>, loss: &str) -> PyResult<Vec<Vec<f64>>> {
    let panel = ErrorPanel::from_rows(&e1, &e2).map_err(to_py_err)?;
    let dl = panel.loss_differential(loss_kind(loss)?).map_err(to_py_err)?;
    Ok(matrix_to_rows(dl.values()))
}

/// Per-unit Diebold-Mariano test on a panel of loss differentials.
#[pyfunction]
#[pyo3(signature = (dl, unit, lt=0))]
fn dm_test(py: Python<'_>, dl: Vec<Vec<f64>>, unit: usize, lt: usize) -> PyResult<Py<PyDict>> {
    let panel = loss_panel(&dl)?;
    let spec = kernel_spec(lt, None, panel.n_units());
    let r = epa_core::dm_unit_test(&panel, &spec, unit).map_err(to_py_err)?;
    Ok(report_dict(py, &r)?.into())
}

/// Overall EPA test; estimator is one of "s1", "s2", "s2_partial", "s3", "s4".
#[pyfunction]
#[pyo3(signature = (dl, estimator, distances=None, lt=0, d_n=None, m=2))]
fn overall_test(
    py: Python<'_>,
    dl: Vec<Vec<f64>>,
    estimator: &str,
    distances: Option<Vec<Vec<f64>>>,
    lt: usize,
    d_n: Option<f64>,
    m: usize,
) -> PyResult<Py<PyDict>> {
    let panel = loss_panel(&dl)?;
    let spec = kernel_spec(lt, d_n, panel.n_units());
    let dist = distance_matrix(distances)?;
    let need_dist = || {
        dist.as_ref()
            .ok_or_else(|| PyValueError::new_err(format!("{estimator} requires distances")))
    };
    let r = match estimator {
        "s1" => epa_core::overall_test(&panel, &spec, OverallEstimator::S1),
        "s2" => epa_core::overall_test(&panel, &spec, OverallEstimator::S2 { dist: need_dist()? }),
        "s2_partial" => epa_core::overall_test(&panel, &spec, OverallEstimator::S2Partial),
        "s3" => epa_core::overall_test(&panel, &spec, OverallEstimator::S3),
        "s4" => {
            let fit = epa_core::pc_fit(&panel.demean_by_unit(), m).map_err(to_py_err)?;
            let idio = match &dist {
                Some(d) => IdioEstimator::Shac(d),
                None => IdioEstimator::PartialSample,
            };
            epa_core::overall_test(&panel, &spec, OverallEstimator::S4 { fit: &fit, idio })
        }
        other => return Err(PyValueError::new_err(format!("unknown estimator '{other}'"))),
    }
    .map_err(to_py_err)?;
    Ok(report_dict(py, &r)?.into())
}

/// Joint EPA test; estimator is one of "j1", "j2", "j3", "j4". With
/// `standardized=True` the Z version is reported instead.
#[pyfunction]
#[pyo3(signature = (dl, estimator, distances=None, lt=0, d_n=None, m=2, standardized=false))]
#[allow(clippy::too_many_arguments)]
fn joint_test(
    py: Python<'_>,
    dl: Vec<Vec<f64>>,
    estimator: &str,
    distances: Option<Vec<Vec<f64>>>,
    lt: usize,
    d_n: Option<f64>,
    m: usize,
    standardized: bool,
) -> PyResult<Py<PyDict>> {
    let panel = loss_panel(&dl)?;
    let spec = kernel_spec(lt, d_n, panel.n_units());
    let dist = distance_matrix(distances)?;
    let need_dist = || {
        dist.as_ref()
            .ok_or_else(|| PyValueError::new_err(format!("{estimator} requires distances")))
    };
    let r = match estimator {
        "j1" => epa_core::joint_test(&panel, &spec, JointEstimator::J1),
        "j2" => epa_core::joint_test(&panel, &spec, JointEstimator::J2 { dist: need_dist()? }),
        "j3" => epa_core::joint_test(&panel, &spec, JointEstimator::J3),
        "j4" => {
            let fit = epa_core::pc_fit(&panel.demean_by_unit(), m).map_err(to_py_err)?;
            let resid_cov = match &dist {
                Some(d) => ResidCov::Spatial(d),
                None => ResidCov::Diagonal,
            };
            epa_core::joint_test(&panel, &spec, JointEstimator::J4 { fit: &fit, resid_cov })
        }
        other => return Err(PyValueError::new_err(format!("unknown estimator '{other}'"))),
    }
    .map_err(to_py_err)?;
    let r = if standardized {
        epa_core::standardized_joint(&r, panel.n_units()).map_err(to_py_err)?
    } else {
        r
    };
    Ok(report_dict(py, &r)?.into())
}

fn cd_dict<'py>(py: Python<'py>, r: &epa_core::CdReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("name", &r.name)?;
    d.set_item("statistic", r.statistic)?;
    d.set_item("p_value", r.p_value)?;
    match r.distribution {
        epa_core::Distribution::StdNormal => d.set_item("distribution", "normal")?,
        epa_core::Distribution::ChiSquare(df) => {
            d.set_item("distribution", "chi_square")?;
            d.set_item("df", df)?;
        }
    }
    Ok(d)
}

/// Breusch-Pagan LM test for cross-sectional dependence.
#[pyfunction]
fn bp_lm(py: Python<'_>, rows: Vec<Vec<f64>>) -> PyResult<Py<PyDict>> {
    let m = matrix_from_rows(&rows, "rows")?;
    let r = epa_core::bp_lm(&m).map_err(to_py_err)?;
    Ok(cd_dict(py, &r)?.into())
}

/// Bias-corrected (or plain standardized) LM test.
#[pyfunction]
#[pyo3(signature = (rows, bias_correction=true))]
fn bp_lm_bc(py: Python<'_>, rows: Vec<Vec<f64>>, bias_correction: bool) -> PyResult<Py<PyDict>> {
    let m = matrix_from_rows(&rows, "rows")?;
    let r = epa_core::bp_lm_bias_corrected(&m, bias_correction).map_err(to_py_err)?;
    Ok(cd_dict(py, &r)?.into())
}

/// Principal-components factor fit on unit-demeaned rows.
#[pyfunction]
fn pc_fit(py: Python<'_>, dl: Vec<Vec<f64>>, m: usize) -> PyResult<Py<PyDict>> {
    let panel = loss_panel(&dl)?;
    let fit = epa_core::pc_fit(&panel.demean_by_unit(), m).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("m", fit.m())?;
    d.set_item("factors", matrix_to_rows(fit.f_hat()))?;
    d.set_item("loadings", matrix_to_rows(fit.lambda_hat()))?;
    d.set_item("residuals", matrix_to_rows(fit.resid()))?;
    d.set_item("ssr", fit.ssr())?;
    Ok(d.into())
}

/// Information-criterion choice of the number of factors over 1..=m_max.
#[pyfunction]
fn select_num_factors(dl: Vec<Vec<f64>>, m_max: usize) -> PyResult<usize> {
    let panel = loss_panel(&dl)?;
    epa_core::select_num_factors(&panel.demean_by_unit(), m_max).map_err(to_py_err)
}

/// Monte Carlo rejection rates; returns one dict per requested test.
#[pyfunction]
#[pyo3(signature = (dgp, n, t, tests, rho=0.5, alternative="null", seed=42, reps=2000, nominal=0.05))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    dgp: &str,
    n: usize,
    t: usize,
    tests: Vec<String>,
    rho: f64,
    alternative: &str,
    seed: u64,
    reps: usize,
    nominal: f64,
) -> PyResult<Vec<Py<PyDict>>> {
    let dgp = match dgp {
        "dgp1" => Dgp::Dgp1,
        "dgp2" => Dgp::Dgp2,
        other => return Err(PyValueError::new_err(format!("unknown dgp '{other}'"))),
    };
    let alternative = match alternative {
        "null" => Alternative::Null,
        "homogeneous" => Alternative::Homogeneous,
        "heterogeneous" => Alternative::Heterogeneous,
        other => return Err(PyValueError::new_err(format!("unknown alternative '{other}'"))),
    };
    let tests: Vec<TestId> = tests
        .iter()
        .map(|name| {
            TestId::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown test '{name}'")))
        })
        .collect::<PyResult<_>>()?;
    let cfg = DgpConfig::new(dgp, n, t, rho, alternative, seed);
    let result = epa_core::run_experiment(&cfg, &tests, reps, nominal).map_err(to_py_err)?;
    result
        .outcomes
        .iter()
        .map(|o| {
            let d = PyDict::new(py);
            d.set_item("test", o.test.as_str())?;
            d.set_item("rejection_rate", o.rejection_rate(result.reps))?;
            d.set_item("failures", o.failures)?;
            d.set_item("reps", result.reps)?;
            Ok(d.into())
        })
        .collect()
}

#[pymodule]
fn epa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(loss_differential, m)?)?;
    m.add_function(wrap_pyfunction!(dm_test, m)?)?;
    m.add_function(wrap_pyfunction!(overall_test, m)?)?;
    m.add_function(wrap_pyfunction!(joint_test, m)?)?;
    m.add_function(wrap_pyfunction!(bp_lm, m)?)?;
    m.add_function(wrap_pyfunction!(bp_lm_bc, m)?)?;
    m.add_function(wrap_pyfunction!(pc_fit, m)?)?;
    m.add_function(wrap_pyfunction!(select_num_factors, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
