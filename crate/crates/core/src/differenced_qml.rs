//! Differenced QML: the first-differenced equations estimated jointly with
//! linear projections of the initial differences.
//!
//! With an unrestricted `Upsilon` the system is fitted by iterated FGLS. For
//! `p = 1` with homoskedastic error components, `Upsilon = sigma2 * Phi(varpi)`
//! where `Phi` is the `(2, -1)` tridiagonal pattern with head entry
//! `phi = exp(varpi) + 1 - 1/n`, `n` the system dimension. Then
//! `det Phi = 1 + n (phi - 1) = n exp(varpi)`, so any real `varpi` is admissible.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::{Estimator, FitConfig, Init, OmegaEstimate, QmlFit};
use crate::likelihood::{self, CovFactor, CovarianceModel, Sandwich, UnrestrictedCov};
use crate::linalg::SymTridiagonal;
use crate::panel_data::{DifferencedSystem, ProjectionBasis};

/// Bound on `|varpi|` when the profile maximizer lies at infinity.
const VARPI_LIMIT: f64 = 30.0;

/// Head entry `exp(varpi) + 1 - 1/dim`.
pub fn phi_head(varpi: f64, dim: usize) -> f64 {
    varpi.exp() + 1.0 - 1.0 / dim as f64
}

fn phi_tridiagonal(varpi: f64, dim: usize) -> SymTridiagonal {
    let mut diag = vec![2.0; dim];
    diag[0] = phi_head(varpi, dim);
    SymTridiagonal { diag, off: vec![-1.0; dim - 1] }
}

/// Dense `Phi(varpi)`.
pub fn phi_matrix(varpi: f64, dim: usize) -> DMatrix<f64> {
    assert!(dim >= 2, "Phi needs dimension at least 2");
    phi_tridiagonal(varpi, dim).to_dense()
}

/// `sigma2 * Phi(varpi)` of dimension `dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiCov {
    pub sigma2: f64,
    pub varpi: f64,
    pub dim: usize,
}

impl PhiCov {
    pub fn phi(&self) -> f64 {
        phi_head(self.varpi, self.dim)
    }
}

impl CovarianceModel for PhiCov {
    fn dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> Vec<f64> {
        vec![self.sigma2, self.varpi]
    }

    fn with_params(&self, params: &[f64]) -> Self {
        PhiCov { sigma2: params[0], varpi: params[1], dim: self.dim }
    }

    fn dense(&self) -> DMatrix<f64> {
        phi_matrix(self.varpi, self.dim) * self.sigma2
    }

    fn factor(&self) -> Result<CovFactor> {
        if !(self.sigma2 > 0.0) || !self.varpi.is_finite() {
            return Err(Error::NotPositiveDefinite("structured differenced covariance"));
        }
        let ldl = phi_tridiagonal(self.varpi, self.dim)
            .ldl()
            .ok_or(Error::NotPositiveDefinite("structured differenced covariance"))?;
        Ok(CovFactor {
            inverse: ldl.inverse() / self.sigma2,
            logdet: self.dim as f64 * self.sigma2.ln() + ldl.logdet(),
        })
    }

    fn first_derivatives(&self) -> Vec<DMatrix<f64>> {
        let mut head = DMatrix::zeros(self.dim, self.dim);
        head[(0, 0)] = self.sigma2 * self.varpi.exp();
        vec![phi_matrix(self.varpi, self.dim), head]
    }

    fn second_derivative(&self, j: usize, k: usize) -> Option<DMatrix<f64>> {
        let scale = match (j.min(k), j.max(k)) {
            (0, 0) => return None,
            (0, 1) => self.varpi.exp(),
            _ => self.sigma2 * self.varpi.exp(),
        };
        let mut m = DMatrix::zeros(self.dim, self.dim);
        m[(0, 0)] = scale;
        Some(m)
    }
}

/// `Upsilon` in either parameterization.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffUpsilon {
    Unrestricted(DMatrix<f64>),
    Structured(PhiCov),
}

/// `lambda = (eta, upsilon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffParams {
    pub eta: DVector<f64>,
    pub upsilon: DiffUpsilon,
}

macro_rules! with_cov {
    ($u:expr, $c:ident => $body:expr) => {
        match $u {
            DiffUpsilon::Unrestricted(m) => {
                let $c = UnrestrictedCov(m.clone());
                $body
            }
            DiffUpsilon::Structured(s) => {
                let $c = *s;
                $body
            }
        }
    };
}

/// Gaussian quasi log-likelihood of the differenced system.
///
/// For the structured form this is `const - (N n / 2) ln sigma2 - N varpi / 2
/// - sum_i u_i' Phi^-1 u_i / (2 sigma2)` with the constant including `-(N/2) ln n`.
pub fn diff_quasi_loglik(sys: &DifferencedSystem, params: &DiffParams) -> Result<f64> {
    with_cov!(&params.upsilon, c => likelihood::loglik(&sys.stack, &params.eta, &c))
}

/// Gradient with respect to `(eta, upsilon)`; `upsilon` is the vech when
/// unrestricted and `(sigma2, varpi)` when structured.
pub fn diff_score(sys: &DifferencedSystem, params: &DiffParams) -> Result<DVector<f64>> {
    with_cov!(&params.upsilon, c => likelihood::score(&sys.stack, &params.eta, &c))
}

pub fn diff_hessian(sys: &DifferencedSystem, params: &DiffParams) -> Result<DMatrix<f64>> {
    with_cov!(&params.upsilon, c => likelihood::hessian(&sys.stack, &params.eta, &c))
}

pub fn diff_sandwich(sys: &DifferencedSystem, params: &DiffParams) -> Result<Sandwich> {
    with_cov!(&params.upsilon, c => likelihood::sandwich(&sys.stack, &params.eta, &c))
}

fn start_coefficients(sys: &DifferencedSystem, init: &Init) -> Result<DVector<f64>> {
    match init {
        Init::Ols | Init::Unrestricted => likelihood::ols(&sys.stack),
        Init::Coefficients(c) if c.len() == sys.stack.n_coef() => Ok(c.clone()),
        Init::Coefficients(c) => Err(Error::Invalid(format!(
            "starting vector has {} coefficients, the system has {}",
            c.len(),
            sys.stack.n_coef()
        ))),
    }
}

fn structured_estimator(basis: ProjectionBasis) -> Estimator {
    match basis {
        ProjectionBasis::FullX => Estimator::DqmlX,
        ProjectionBasis::DiffX => Estimator::DqmlDx,
    }
}

/// Iterated FGLS with unrestricted `Upsilon`.
pub fn fit_diff_unrestricted(sys: &DifferencedSystem, cfg: &FitConfig) -> Result<QmlFit> {
    let start = start_coefficients(sys, &cfg.init)?;
    let r = likelihood::iterate_unrestricted(&sys.stack, start, cfg.tol, cfg.max_iter)?;
    if !r.converged {
        log::warn!("differenced FGLS did not converge in {} iterations", cfg.max_iter);
    }
    let (cov_sandwich, hnd) = if cfg.covariance {
        let s = likelihood::sandwich(&sys.stack, &r.coef, &r.cov)?;
        (Some(s.covariance), Some(s.hessian_negative_definite))
    } else {
        (None, None)
    };
    Ok(QmlFit {
        estimator: Estimator::DqmlUnrestricted,
        coefficient_names: sys.coefficient_names(),
        coefficients: r.coef,
        omega: OmegaEstimate::full(&r.cov.0),
        loglik: r.loglik,
        loglik_trace: r.loglik_trace,
        cov_sandwich,
        hessian_negative_definite: hnd,
        iterations: r.iterations,
        converged: r.converged,
        sigma_a_zeroed: false,
    })
}

/// Maximizes the structured likelihood over `(sigma2, varpi)` at fixed residuals.
///
/// With `T` the `(2, -1)` tridiagonal matrix and `kappa = (T^-1)_11 = n/(n+1)`,
/// `sum_i u_i' Phi^-1 u_i = a + b exp(-varpi)` where `a = A - B/kappa`,
/// `b = B/kappa^2`, `A = sum u' T^-1 u` and `B = sum (e_1' T^-1 u)^2`.
pub fn profile_variance(sys: &DifferencedSystem, eta: &DVector<f64>) -> PhiCov {
    let n = sys.system_dim();
    let t = SymTridiagonal { diag: vec![2.0; n], off: vec![-1.0; n - 1] };
    let ldl = t.ldl().expect("(2, -1) tridiagonal is positive definite");
    let (mut big_a, mut big_b) = (0.0, 0.0);
    let mut x = vec![0.0; n];
    for i in 0..sys.stack.n_individuals() {
        let u = sys.stack.residual(i, eta);
        x.copy_from_slice(u.as_slice());
        ldl.solve_in_place(&mut x);
        big_a += u.dot(&DVector::from_column_slice(&x));
        big_b += x[0] * x[0];
    }
    let kappa = n as f64 / (n as f64 + 1.0);
    let a = (big_a - big_b / kappa).max(0.0);
    let b = big_b / (kappa * kappa);
    let varpi = if a > 0.0 && b > 0.0 {
        ((n as f64 - 1.0) * b / a).ln().clamp(-VARPI_LIMIT, VARPI_LIMIT)
    } else if b > 0.0 {
        VARPI_LIMIT
    } else {
        -VARPI_LIMIT
    };
    let quad = a + b * (-varpi).exp();
    let sigma2 = quad / (sys.stack.n_individuals() * n) as f64;
    PhiCov { sigma2, varpi, dim: n }
}

/// Coordinate ascent for the `p = 1` error-components likelihood.
pub fn fit_diff_structured(sys: &DifferencedSystem, cfg: &FitConfig) -> Result<QmlFit> {
    if sys.lag_order != 1 {
        return Err(Error::UnsupportedLagOrder(sys.lag_order));
    }
    let stack = &sys.stack;
    let n = sys.system_dim();
    let mut eta = start_coefficients(sys, &cfg.init)?;
    let mut pooled = 0.0;
    for i in 0..stack.n_individuals() {
        let u = stack.residual(i, &eta);
        pooled += u.rows(sys.lag_order, n - sys.lag_order).norm_squared();
    }
    let sigma2 = 0.5 * pooled / (stack.n_individuals() * (n - sys.lag_order)) as f64;
    let mut cov = PhiCov { sigma2: if sigma2 > 0.0 { sigma2 } else { 1.0 }, varpi: 0.0, dim: n };
    let moments = likelihood::GlsMoments::new(stack);
    let mut trace = vec![likelihood::loglik(stack, &eta, &cov)?];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let f = cov.factor()?;
        let next_eta = moments.solve(&f.inverse)?;
        let next = profile_variance(sys, &next_eta);
        if !(next.sigma2 > 0.0) {
            return Err(Error::NotPositiveDefinite("structured differenced covariance"));
        }
        let mut old = eta.as_slice().to_vec();
        old.extend(cov.params());
        let mut new = next_eta.as_slice().to_vec();
        new.extend(next.params());
        let change = likelihood::max_relative_change(&old, &new);
        eta = next_eta;
        cov = next;
        trace.push(likelihood::loglik(stack, &eta, &cov)?);
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("structured differenced fit did not converge in {} iterations", cfg.max_iter);
    }
    let (cov_sandwich, hnd) = if cfg.covariance {
        let s = likelihood::sandwich(stack, &eta, &cov)?;
        (Some(s.covariance), Some(s.hessian_negative_definite))
    } else {
        (None, None)
    };
    Ok(QmlFit {
        estimator: structured_estimator(sys.basis),
        coefficient_names: sys.coefficient_names(),
        coefficients: eta,
        omega: OmegaEstimate::Differenced { sigma2: cov.sigma2, varpi: cov.varpi, phi: cov.phi() },
        loglik: *trace.last().unwrap(),
        loglik_trace: trace,
        cov_sandwich,
        hessian_negative_definite: hnd,
        iterations,
        converged,
        sigma_a_zeroed: false,
    })
}
