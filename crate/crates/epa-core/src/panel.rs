//! Core data model: panels of forecast errors and loss differentials,
//! per-unit demeaning and distance matrices.
//!
//! Panels are stored dense and row-major by unit: row `i` is the time series
//! of unit `i`. Unbalanced data is rejected at ingestion rather than imputed.
//! All types are immutable after construction.

use nalgebra::{DMatrix, DVector};

use crate::error::{EpaError, Result};

/// Pointwise loss function applied to forecast errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Absolute,
    Quadratic,
    /// Caller-supplied pointwise loss; see [`ErrorPanel::loss_differential_with`].
    Custom,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Absolute => "absolute",
            LossKind::Quadratic => "quadratic",
            LossKind::Custom => "custom",
        }
    }
}

/// Balanced n x T panel of forecast errors from two forecasters.
#[derive(Debug, Clone)]
pub struct ErrorPanel {
    e1: DMatrix<f64>,
    e2: DMatrix<f64>,
    unit_labels: Vec<String>,
    time_labels: Vec<String>,
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for t in 0..m.ncols() {
            if !m[(i, t)].is_finite() {
                return Err(EpaError::NonFinite { unit: i, period: t });
            }
        }
    }
    Ok(())
}

fn default_labels(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|k| format!("{prefix}{k}")).collect()
}

impl ErrorPanel {
    pub fn new(
        e1: DMatrix<f64>,
        e2: DMatrix<f64>,
        unit_labels: Vec<String>,
        time_labels: Vec<String>,
    ) -> Result<Self> {
        if e1.nrows() == 0 || e1.ncols() == 0 {
            return Err(EpaError::Shape("panel must be at least 1x1".into()));
        }
        if e1.shape() != e2.shape() {
            return Err(EpaError::Shape(format!(
                "e1 is {:?} but e2 is {:?}",
                e1.shape(),
                e2.shape()
            )));
        }
        if unit_labels.len() != e1.nrows() || time_labels.len() != e1.ncols() {
            return Err(EpaError::Shape("label count does not match panel shape".into()));
        }
        check_finite(&e1)?;
        check_finite(&e2)?;
        Ok(Self { e1, e2, unit_labels, time_labels })
    }

    pub fn from_rows(e1: &[Vec<f64>], e2: &[Vec<f64>]) -> Result<Self> {
        let m1 = rows_to_matrix(e1)?;
        let m2 = rows_to_matrix(e2)?;
        let (n, t) = m1.shape();
        Self::new(m1, m2, default_labels("u", n), default_labels("t", t))
    }

    pub fn n_units(&self) -> usize {
        self.e1.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.e1.ncols()
    }

    pub fn e1(&self) -> &DMatrix<f64> {
        &self.e1
    }

    pub fn e2(&self) -> &DMatrix<f64> {
        &self.e2
    }

    pub fn unit_labels(&self) -> &[String] {
        &self.unit_labels
    }

    pub fn time_labels(&self) -> &[String] {
        &self.time_labels
    }

    /// Loss differential panel: `dl[i,t] = L(e1[i,t]) - L(e2[i,t])`.
    pub fn loss_differential(&self, kind: LossKind) -> Result<LossPanel> {
        match kind {
            LossKind::Absolute => self.loss_differential_impl(|e| e.abs(), LossKind::Absolute),
            LossKind::Quadratic => self.loss_differential_impl(|e| e * e, LossKind::Quadratic),
            LossKind::Custom => Err(EpaError::InvalidArgument(
                "custom loss requires loss_differential_with".into(),
            )),
        }
    }

    /// Loss differential under a caller-supplied pointwise loss. The loss must
    /// be pure and return finite values on the panel's support.
    pub fn loss_differential_with(&self, loss: impl Fn(f64) -> f64) -> Result<LossPanel> {
        self.loss_differential_impl(loss, LossKind::Custom)
    }

    fn loss_differential_impl(
        &self,
        loss: impl Fn(f64) -> f64,
        kind: LossKind,
    ) -> Result<LossPanel> {
        let (n, t) = self.e1.shape();
        let mut dl = DMatrix::zeros(n, t);
        for i in 0..n {
            for s in 0..t {
                let v = loss(self.e1[(i, s)]) - loss(self.e2[(i, s)]);
                if !v.is_finite() {
                    return Err(EpaError::NonFinite { unit: i, period: s });
                }
                dl[(i, s)] = v;
            }
        }
        LossPanel::new(dl, kind)
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(EpaError::Shape("panel must be at least 1x1".into()));
    }
    let t = rows[0].len();
    if rows.iter().any(|r| r.len() != t) {
        return Err(EpaError::Shape("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), t, |i, s| rows[i][s]))
}

/// Balanced n x T panel of loss differentials.
#[derive(Debug, Clone)]
pub struct LossPanel {
    dl: DMatrix<f64>,
    loss_kind: LossKind,
}

impl LossPanel {
    pub fn new(dl: DMatrix<f64>, loss_kind: LossKind) -> Result<Self> {
        if dl.nrows() == 0 || dl.ncols() == 0 {
            return Err(EpaError::Shape("panel must be at least 1x1".into()));
        }
        check_finite(&dl)?;
        Ok(Self { dl, loss_kind })
    }

    pub fn from_rows(rows: &[Vec<f64>], loss_kind: LossKind) -> Result<Self> {
        Self::new(rows_to_matrix(rows)?, loss_kind)
    }

    pub fn n_units(&self) -> usize {
        self.dl.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.dl.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.dl
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss_kind
    }

    /// Sample mean over time and units.
    pub fn grand_mean(&self) -> f64 {
        self.dl.sum() / (self.dl.nrows() * self.dl.ncols()) as f64
    }

    /// Per-unit time means as an n-vector.
    pub fn unit_means(&self) -> DVector<f64> {
        let t = self.dl.ncols() as f64;
        DVector::from_iterator(self.dl.nrows(), self.dl.row_iter().map(|r| r.sum() / t))
    }

    /// Subtract each unit's time mean from its row.
    pub fn demean_by_unit(&self) -> DemeanedPanel {
        let means = self.unit_means();
        let mut dlt = self.dl.clone();
        for i in 0..dlt.nrows() {
            dlt.row_mut(i).add_scalar_mut(-means[i]);
        }
        DemeanedPanel { dlt, unit_means: means }
    }
}

/// Unit-demeaned loss differentials together with the removed means.
#[derive(Debug, Clone)]
pub struct DemeanedPanel {
    dlt: DMatrix<f64>,
    unit_means: DVector<f64>,
}

impl DemeanedPanel {
    pub fn n_units(&self) -> usize {
        self.dlt.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.dlt.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.dlt
    }

    pub fn unit_means(&self) -> &DVector<f64> {
        &self.unit_means
    }
}

/// Symmetric nonnegative distance matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        if d.nrows() != d.ncols() {
            return Err(EpaError::Shape("distance matrix must be square".into()));
        }
        for i in 0..d.nrows() {
            if d[(i, i)] != 0.0 {
                return Err(EpaError::InvalidArgument(format!(
                    "distance diagonal must be zero (unit {i})"
                )));
            }
            for j in 0..d.ncols() {
                let v = d[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(EpaError::InvalidArgument(format!(
                        "invalid distance at ({i},{j})"
                    )));
                }
                if d[(i, j)] != d[(j, i)] {
                    return Err(EpaError::InvalidArgument(format!(
                        "distance matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { d })
    }

    pub fn n_units(&self) -> usize {
        self.d.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.d
    }
}
