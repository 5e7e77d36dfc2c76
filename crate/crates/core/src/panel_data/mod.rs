//! Balanced panel datasets and the design matrices the estimators consume.

mod csv_input;
mod design;

pub use csv_input::{load_csv, read_csv, CsvSchema};
pub use design::{build_augmented, build_differenced, AugmentedDesign, DifferencedSystem, ProjectionBasis, RegressionStack};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Optional identifiers carried through from an input file.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelLabels {
    pub individuals: Vec<String>,
    /// One label per observed period, pre-sample periods included.
    pub periods: Vec<i64>,
}

/// A balanced panel with `p` pre-sample values of the dependent variable.
///
/// For individual `i`, `y[i]` holds `y_{i,-p+1}, ..., y_{i0}, y_{i1}, ..., y_{iT}`
/// and `x[i]` is the `T x K` regressor matrix for periods `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    n_periods: usize,
    lag_order: usize,
    n_regressors: usize,
    y: Vec<Vec<f64>>,
    x: Vec<DMatrix<f64>>,
    labels: Option<PanelLabels>,
}

impl PanelDataset {
    pub fn new(y: Vec<Vec<f64>>, x: Vec<DMatrix<f64>>, lag_order: usize, labels: Option<PanelLabels>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::Invalid(format!("need at least 2 individuals, got {n}")));
        }
        if lag_order < 1 {
            return Err(Error::Invalid("lag order must be at least 1".into()));
        }
        if x.len() != n {
            return Err(Error::Invalid(format!("{} regressor blocks for {} individuals", x.len(), n)));
        }
        let len = y[0].len();
        if len < lag_order + 2 {
            return Err(Error::InsufficientPeriods { found: len, required: lag_order + 2 });
        }
        let t = len - lag_order;
        let k = x[0].ncols();
        for (i, (yi, xi)) in y.iter().zip(&x).enumerate() {
            if yi.len() != len || xi.nrows() != t || xi.ncols() != k {
                return Err(Error::Invalid(format!("individual {i} breaks the balanced layout")));
            }
            if yi.iter().chain(xi.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("individual {i} has non-finite values")));
            }
        }
        if let Some(l) = &labels {
            if l.individuals.len() != n || l.periods.len() != len {
                return Err(Error::Invalid("label dimensions do not match the panel".into()));
            }
        }
        Ok(Self { n_periods: t, lag_order, n_regressors: k, y, x, labels })
    }

    pub fn n_individuals(&self) -> usize {
        self.y.len()
    }

    /// `T`, the number of periods after the pre-sample block.
    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn lag_order(&self) -> usize {
        self.lag_order
    }

    pub fn n_regressors(&self) -> usize {
        self.n_regressors
    }

    pub fn labels(&self) -> Option<&PanelLabels> {
        self.labels.as_ref()
    }

    /// Full series `y_{i,-p+1..=T}`.
    pub fn y_series(&self, i: usize) -> &[f64] {
        &self.y[i]
    }

    /// `y_{it}` for `t` in `-p+1..=T`.
    #[inline]
    pub fn y(&self, i: usize, t: isize) -> f64 {
        self.y[i][(t + self.lag_order as isize - 1) as usize]
    }

    /// `T x K` regressors for periods `1..=T`.
    pub fn x_matrix(&self, i: usize) -> &DMatrix<f64> {
        &self.x[i]
    }

    /// `x_{itk}` for `t` in `1..=T`.
    #[inline]
    pub fn x(&self, i: usize, t: usize, k: usize) -> f64 {
        self.x[i][(t - 1, k)]
    }

    /// `y_i^o = (y_{i0}, y_{i,-1}, ..., y_{i,-p+1})`.
    pub fn initial_values(&self, i: usize) -> Vec<f64> {
        (0..self.lag_order).map(|j| self.y(i, -(j as isize))).collect()
    }

    /// Reorders individuals; `order[k]` is the source index of the k-th individual.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let y = order.iter().map(|&i| self.y[i].clone()).collect();
        let x = order.iter().map(|&i| self.x[i].clone()).collect();
        let labels = self.labels.as_ref().map(|l| PanelLabels {
            individuals: order.iter().map(|&i| l.individuals[i].clone()).collect(),
            periods: l.periods.clone(),
        });
        Self::new(y, x, self.lag_order, labels)
    }
}
