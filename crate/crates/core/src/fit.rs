//! Estimation results and their JSON document form.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Estimator roster exposed by the library and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    LqmlEcme,
    LqmlUnrestricted,
    DqmlX,
    DqmlDx,
    DqmlUnrestricted,
    Dgmm,
    Sgmm,
}

impl Estimator {
    pub const ALL: [Estimator; 7] = [
        Estimator::LqmlEcme,
        Estimator::LqmlUnrestricted,
        Estimator::DqmlX,
        Estimator::DqmlDx,
        Estimator::DqmlUnrestricted,
        Estimator::Dgmm,
        Estimator::Sgmm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::LqmlEcme => "lqml_ecme",
            Estimator::LqmlUnrestricted => "lqml_unrestricted",
            Estimator::DqmlX => "dqml_x",
            Estimator::DqmlDx => "dqml_dx",
            Estimator::DqmlUnrestricted => "dqml_unrestricted",
            Estimator::Dgmm => "dgmm",
            Estimator::Sgmm => "sgmm",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown estimator `{s}`")))
    }
}

/// Fitted error covariance in the form the estimator parameterizes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaEstimate {
    /// `sigma_a2 * iota iota' + diag(sigma2)`.
    Structured { sigma_a2: f64, sigma2: Vec<f64> },
    /// `sigma2 * Phi(varpi)`, with `phi` the head entry of `Phi`.
    Differenced { sigma2: f64, varpi: f64, phi: f64 },
    Full(Vec<Vec<f64>>),
}

impl OmegaEstimate {
    pub fn full(m: &DMatrix<f64>) -> Self {
        OmegaEstimate::Full(matrix_rows(m))
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Result of a QML fit.
#[derive(Debug, Clone)]
pub struct QmlFit {
    pub estimator: Estimator,
    pub coefficient_names: Vec<String>,
    pub coefficients: DVector<f64>,
    pub omega: OmegaEstimate,
    pub loglik: f64,
    /// Log-likelihood at the start and after every iteration.
    pub loglik_trace: Vec<f64>,
    /// Covariance of (coefficients, covariance parameters).
    pub cov_sandwich: Option<DMatrix<f64>>,
    pub hessian_negative_definite: Option<bool>,
    pub iterations: usize,
    pub converged: bool,
    pub sigma_a_zeroed: bool,
}

impl QmlFit {
    /// Coefficient on the `j`-th lag (1-based) of the dependent variable.
    pub fn delta(&self, j: usize) -> f64 {
        self.coefficients[j - 1]
    }

    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.cov_sandwich
            .as_ref()
            .map(|c| (0..self.coefficients.len()).map(|k| c[(k, k)].max(0.0).sqrt()).collect())
    }

    pub fn document(&self) -> FitDocument {
        FitDocument {
            estimator: self.estimator,
            coefficient_names: self.coefficient_names.clone(),
            gamma: self.coefficients.iter().copied().collect(),
            standard_errors: self.standard_errors(),
            omega: Some(self.omega.clone()),
            loglik: Some(self.loglik),
            iterations: self.iterations,
            converged: self.converged,
            sigma_a_zeroed: self.sigma_a_zeroed,
            cov_sandwich: self.cov_sandwich.as_ref().map(matrix_rows),
            hessian_negative_definite: self.hessian_negative_definite,
            instrument_count: None,
            weight_pinv: None,
        }
    }
}

/// Serializable fit summary shared by every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub estimator: Estimator,
    pub coefficient_names: Vec<String>,
    pub gamma: Vec<f64>,
    pub standard_errors: Option<Vec<f64>>,
    pub omega: Option<OmegaEstimate>,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub sigma_a_zeroed: bool,
    pub cov_sandwich: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian_negative_definite: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instrument_count: Option<usize>,
    /// Set when a singular GMM weight matrix was replaced by its pseudo-inverse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_pinv: Option<bool>,
}

/// Iteration controls shared by the QML estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Stop once the largest relative parameter change falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Mean implied error correlation below which the effect variance is zeroed.
    pub rho_zero_threshold: f64,
    pub init: Init,
    /// Compute the sandwich covariance at the final estimate.
    pub covariance: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 5000, rho_zero_threshold: 0.01, init: Init::Unrestricted, covariance: true }
    }
}

/// Starting coefficients; covariance starting values are derived from their residuals.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Ols,
    /// Coefficients of the unrestricted-covariance levels fit. Used by ECME, whose
    /// effect-variance path is sensitive to a poor start; other fits read it as `Ols`.
    Unrestricted,
    Coefficients(DVector<f64>),
}
