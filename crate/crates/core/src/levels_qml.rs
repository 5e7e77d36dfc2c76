//! Levels QML for the augmented model `y_i = W_i gamma + u_i`.
//!
//! Two covariance specifications are supported: an unrestricted `Omega`, fitted
//! by iterated FGLS, and the random-effects form `sigma_a^2 iota iota' + Sigma`
//! with time-varying `Sigma = diag(sigma_t^2)`, fitted by ECME.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::{Estimator, FitConfig, Init, OmegaEstimate, QmlFit};
use crate::likelihood::{self, CovFactor, CovarianceModel, Sandwich, UnrestrictedCov};
use crate::linalg;
use crate::panel_data::{AugmentedDesign, RegressionStack};

/// `sigma_a2 * iota iota' + diag(sigma2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredOmega {
    pub sigma_a2: f64,
    pub sigma2: Vec<f64>,
}

impl StructuredOmega {
    /// Mean over `s < t` of the implied error correlations.
    pub fn mean_correlation(&self) -> f64 {
        let t = self.sigma2.len();
        if t < 2 {
            return 0.0;
        }
        let sa = self.sigma_a2;
        let mut sum = 0.0;
        for s in 0..t {
            for r in s + 1..t {
                sum += sa / ((sa + self.sigma2[s]) * (sa + self.sigma2[r])).sqrt();
            }
        }
        2.0 * sum / (t * (t - 1)) as f64
    }

    fn params_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.sigma2.len());
        v.push(self.sigma_a2);
        v.extend_from_slice(&self.sigma2);
        v
    }
}

impl CovarianceModel for StructuredOmega {
    fn dim(&self) -> usize {
        self.sigma2.len()
    }

    fn params(&self) -> Vec<f64> {
        self.params_vec()
    }

    fn with_params(&self, params: &[f64]) -> Self {
        StructuredOmega { sigma_a2: params[0], sigma2: params[1..].to_vec() }
    }

    fn dense(&self) -> DMatrix<f64> {
        let t = self.dim();
        DMatrix::from_fn(t, t, |r, c| self.sigma_a2 + if r == c { self.sigma2[r] } else { 0.0 })
    }

    /// Rank-one update of `Sigma^-1`.
    fn factor(&self) -> Result<CovFactor> {
        if self.sigma2.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || !self.sigma_a2.is_finite() {
            return Err(Error::NotPositiveDefinite("structured levels covariance"));
        }
        let t = self.dim();
        let w: Vec<f64> = self.sigma2.iter().map(|s| 1.0 / s).collect();
        let denom = 1.0 + self.sigma_a2 * w.iter().sum::<f64>();
        if !(denom > 0.0) {
            return Err(Error::NotPositiveDefinite("structured levels covariance"));
        }
        let k = self.sigma_a2 / denom;
        let inverse = DMatrix::from_fn(t, t, |r, c| if r == c { w[r] } else { 0.0 } - k * w[r] * w[c]);
        let logdet = self.sigma2.iter().map(|s| s.ln()).sum::<f64>() + denom.ln();
        Ok(CovFactor { inverse, logdet })
    }

    fn first_derivatives(&self) -> Vec<DMatrix<f64>> {
        let t = self.dim();
        let mut out = vec![DMatrix::from_element(t, t, 1.0)];
        for s in 0..t {
            let mut m = DMatrix::zeros(t, t);
            m[(s, s)] = 1.0;
            out.push(m);
        }
        out
    }
}

/// `Omega` in either parameterization.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelsOmega {
    Unrestricted(DMatrix<f64>),
    Structured(StructuredOmega),
}

impl LevelsOmega {
    pub fn dense(&self) -> DMatrix<f64> {
        match self {
            LevelsOmega::Unrestricted(m) => m.clone(),
            LevelsOmega::Structured(s) => s.dense(),
        }
    }
}

/// `psi = (gamma, omega)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelsParams {
    pub gamma: DVector<f64>,
    pub omega: LevelsOmega,
}

macro_rules! with_cov {
    ($omega:expr, $c:ident => $body:expr) => {
        match $omega {
            LevelsOmega::Unrestricted(m) => {
                let $c = UnrestrictedCov(m.clone());
                $body
            }
            LevelsOmega::Structured(s) => {
                let $c = s.clone();
                $body
            }
        }
    };
}

pub fn quasi_loglik(design: &AugmentedDesign, params: &LevelsParams) -> Result<f64> {
    with_cov!(&params.omega, c => likelihood::loglik(&design.stack, &params.gamma, &c))
}

/// Gradient with respect to `(gamma, omega)`; `omega` is `vech(Omega)` when
/// unrestricted and `(sigma_a2, sigma2_1..T)` when structured.
pub fn score(design: &AugmentedDesign, params: &LevelsParams) -> Result<DVector<f64>> {
    with_cov!(&params.omega, c => likelihood::score(&design.stack, &params.gamma, &c))
}

pub fn hessian(design: &AugmentedDesign, params: &LevelsParams) -> Result<DMatrix<f64>> {
    with_cov!(&params.omega, c => likelihood::hessian(&design.stack, &params.gamma, &c))
}

pub fn sandwich_covariance(design: &AugmentedDesign, params: &LevelsParams) -> Result<Sandwich> {
    with_cov!(&params.omega, c => likelihood::sandwich(&design.stack, &params.gamma, &c))
}

/// GLS coefficients at a given `Omega`.
pub fn fgls_step(design: &AugmentedDesign, omega: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (inverse, _) = linalg::spd_inverse_logdet(omega, "FGLS weight")?;
    likelihood::gls(&design.stack, &inverse)
}

/// `sum_i u_i u_i' / N`.
pub fn omega_update_unrestricted(design: &AugmentedDesign, gamma: &DVector<f64>) -> DMatrix<f64> {
    likelihood::residual_moment(&design.stack, gamma)
}

/// Conditional means `a_i` of the individual effects and their common conditional variance.
pub fn ecme_estep(design: &AugmentedDesign, gamma: &DVector<f64>, omega: &StructuredOmega) -> Result<(DVector<f64>, f64)> {
    let f = omega.factor()?;
    Ok(estep_residuals(&residual_matrix(&design.stack, gamma), omega.sigma_a2, &f.inverse))
}

/// Variance components maximizing the expected complete-data likelihood.
pub fn ecme_cm1(design: &AugmentedDesign, gamma: &DVector<f64>, a: &DVector<f64>, v: f64) -> StructuredOmega {
    cm1_residuals(&residual_matrix(&design.stack, gamma), a, v)
}

/// Residuals as a `T x N` matrix, one column per individual.
fn residual_matrix(stack: &RegressionStack, gamma: &DVector<f64>) -> DMatrix<f64> {
    let t = stack.n_rows();
    let mut u = DMatrix::zeros(t, stack.n_individuals());
    for i in 0..stack.n_individuals() {
        let mut col = u.column_mut(i);
        col.copy_from(&stack.responses[i]);
        col.gemv(-1.0, &stack.designs[i], gamma, 1.0);
    }
    u
}

fn estep_residuals(u: &DMatrix<f64>, sa: f64, inverse: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let t = inverse.nrows();
    let iota_inv: DVector<f64> = DVector::from_fn(t, |c, _| inverse.column(c).sum());
    let a = u.tr_mul(&iota_inv) * sa;
    let v = sa * (1.0 - sa * iota_inv.sum());
    (a, v.max(0.0))
}

fn cm1_residuals(u: &DMatrix<f64>, a: &DVector<f64>, v: f64) -> StructuredOmega {
    let (t, n) = u.shape();
    let sigma_a2 = v + a.norm_squared() / n as f64;
    let mut sigma2 = vec![0.0; t];
    for i in 0..n {
        for s in 0..t {
            let e = u[(s, i)] - a[i];
            sigma2[s] += e * e;
        }
    }
    for s in sigma2.iter_mut() {
        *s = v + *s / n as f64;
    }
    StructuredOmega { sigma_a2, sigma2 }
}

/// Gaussian log-likelihood from a `T x N` residual matrix.
fn loglik_residuals(u: &DMatrix<f64>, f: &CovFactor) -> f64 {
    let (t, n) = u.shape();
    let quad = (&f.inverse * u).component_mul(u).sum();
    -0.5 * (n * t) as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * n as f64 * f.logdet - 0.5 * quad
}

/// GLS coefficients at the updated variance components.
pub fn ecme_cm2(design: &AugmentedDesign, omega: &StructuredOmega) -> Result<DVector<f64>> {
    likelihood::gls(&design.stack, &omega.factor()?.inverse)
}

fn start_coefficients(design: &AugmentedDesign, cfg: &FitConfig, structured: bool) -> Result<DVector<f64>> {
    match &cfg.init {
        Init::Unrestricted if structured => {
            let ols = likelihood::ols(&design.stack)?;
            Ok(likelihood::iterate_unrestricted(&design.stack, ols, cfg.tol, cfg.max_iter)?.coef)
        }
        Init::Ols | Init::Unrestricted => likelihood::ols(&design.stack),
        Init::Coefficients(c) if c.len() == design.stack.n_coef() => Ok(c.clone()),
        Init::Coefficients(c) => Err(Error::Invalid(format!(
            "starting vector has {} coefficients, the design has {}",
            c.len(),
            design.stack.n_coef()
        ))),
    }
}

/// Per-period residual variances and the mean residual covariance clipped at 0.
pub fn initial_structured(design: &AugmentedDesign, gamma: &DVector<f64>) -> StructuredOmega {
    let m = likelihood::residual_moment(&design.stack, gamma);
    let t = m.nrows();
    let mut off = 0.0;
    for r in 0..t {
        for c in 0..t {
            if r != c {
                off += m[(r, c)];
            }
        }
    }
    let sigma2: Vec<f64> = (0..t).map(|s| m[(s, s)]).collect();
    let sigma_a2 = if t > 1 { (off / (t * (t - 1)) as f64).max(0.0) } else { 0.0 };
    StructuredOmega { sigma_a2, sigma2 }
}

/// ECME for the random-effects covariance with time-series heteroskedasticity.
pub fn fit_ecme(design: &AugmentedDesign, cfg: &FitConfig) -> Result<QmlFit> {
    let mut gamma = start_coefficients(design, cfg, true)?;
    let mut omega = initial_structured(design, &gamma);
    let mut zeroed = false;
    let stack = &design.stack;
    let moments = likelihood::GlsMoments::new(stack);
    let mut u = residual_matrix(stack, &gamma);
    let mut f = omega.factor()?;
    let mut trace = vec![loglik_residuals(&u, &f)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let (a, v) = estep_residuals(&u, omega.sigma_a2, &f.inverse);
        let mut next = cm1_residuals(&u, &a, v);
        if zeroed {
            next.sigma_a2 = 0.0;
        } else if next.mean_correlation() < cfg.rho_zero_threshold {
            log::debug!("effect variance zeroed at iteration {iterations}");
            next.sigma_a2 = 0.0;
            zeroed = true;
        }
        f = next.factor()?;
        let next_gamma = moments.solve(&f.inverse)?;
        let mut old = gamma.as_slice().to_vec();
        old.extend(omega.params_vec());
        let mut new = next_gamma.as_slice().to_vec();
        new.extend(next.params_vec());
        let change = likelihood::max_relative_change(&old, &new);
        gamma = next_gamma;
        omega = next;
        u = residual_matrix(stack, &gamma);
        trace.push(loglik_residuals(&u, &f));
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("ECME did not converge in {} iterations", cfg.max_iter);
    }
    let (cov_sandwich, hnd) = if cfg.covariance {
        let s = likelihood::sandwich(stack, &gamma, &omega)?;
        (Some(s.covariance), Some(s.hessian_negative_definite))
    } else {
        (None, None)
    };
    Ok(QmlFit {
        estimator: Estimator::LqmlEcme,
        coefficient_names: design.coefficient_names(),
        coefficients: gamma,
        omega: OmegaEstimate::Structured { sigma_a2: omega.sigma_a2, sigma2: omega.sigma2.clone() },
        loglik: *trace.last().unwrap(),
        loglik_trace: trace,
        cov_sandwich,
        hessian_negative_definite: hnd,
        iterations,
        converged,
        sigma_a_zeroed: zeroed,
    })
}

/// Iterated FGLS with unrestricted `Omega`.
pub fn fit_iterated_fgls(design: &AugmentedDesign, cfg: &FitConfig) -> Result<QmlFit> {
    let start = start_coefficients(design, cfg, false)?;
    let r = likelihood::iterate_unrestricted(&design.stack, start, cfg.tol, cfg.max_iter)?;
    if !r.converged {
        log::warn!("iterated FGLS did not converge in {} iterations", cfg.max_iter);
    }
    let (cov_sandwich, hnd) = if cfg.covariance {
        let s = likelihood::sandwich(&design.stack, &r.coef, &r.cov)?;
        (Some(s.covariance), Some(s.hessian_negative_definite))
    } else {
        (None, None)
    };
    Ok(QmlFit {
        estimator: Estimator::LqmlUnrestricted,
        coefficient_names: design.coefficient_names(),
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
