//! Gaussian quasi log-likelihood of a stacked linear system
//! `y_i = W_i b + u_i`, `u_i ~ N(0, S(theta))`, with analytic score, Hessian and
//! sandwich covariance for any covariance parameterization.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel_data::RegressionStack;

/// Inverse and log-determinant of an error covariance matrix.
#[derive(Debug, Clone)]
pub struct CovFactor {
    pub inverse: DMatrix<f64>,
    pub logdet: f64,
}

/// A parameterized error covariance matrix.
pub trait CovarianceModel: Clone {
    fn dim(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn with_params(&self, params: &[f64]) -> Self;
    fn dense(&self) -> DMatrix<f64>;
    fn factor(&self) -> Result<CovFactor>;
    /// `dS/dtheta_k` for every parameter.
    fn first_derivatives(&self) -> Vec<DMatrix<f64>>;
    /// `d^2 S / dtheta_j dtheta_k`; `None` when it vanishes.
    fn second_derivative(&self, _j: usize, _k: usize) -> Option<DMatrix<f64>> {
        None
    }
    fn n_params(&self) -> usize {
        self.params().len()
    }
}

/// Freely varying symmetric covariance, parameterized by its vech.
#[derive(Debug, Clone, PartialEq)]
pub struct UnrestrictedCov(pub DMatrix<f64>);

impl CovarianceModel for UnrestrictedCov {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn params(&self) -> Vec<f64> {
        linalg::vech(&self.0)
    }

    fn with_params(&self, params: &[f64]) -> Self {
        UnrestrictedCov(linalg::unvech(params, self.dim()))
    }

    fn dense(&self) -> DMatrix<f64> {
        self.0.clone()
    }

    fn factor(&self) -> Result<CovFactor> {
        let (inverse, logdet) = linalg::spd_inverse_logdet(&self.0, "unrestricted error covariance")?;
        Ok(CovFactor { inverse, logdet })
    }

    fn first_derivatives(&self) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        linalg::vech_positions(n)
            .into_iter()
            .map(|(r, c)| {
                let mut m = DMatrix::<f64>::zeros(n, n);
                m[(r, c)] = 1.0;
                m[(c, r)] = 1.0;
                m
            })
            .collect()
    }
}

/// Sum over individuals of the Gaussian log-density of the residuals.
pub fn loglik_with_factor(stack: &RegressionStack, coef: &DVector<f64>, f: &CovFactor) -> f64 {
    let t = stack.n_rows() as f64;
    let n = stack.n_individuals() as f64;
    let mut quad = 0.0;
    for i in 0..stack.n_individuals() {
        let u = stack.residual(i, coef);
        quad += (&f.inverse * &u).dot(&u);
    }
    -0.5 * n * t * (2.0 * PI).ln() - 0.5 * n * f.logdet - 0.5 * quad
}

pub fn loglik<C: CovarianceModel>(stack: &RegressionStack, coef: &DVector<f64>, cov: &C) -> Result<f64> {
    Ok(loglik_with_factor(stack, coef, &cov.factor()?))
}

/// Per-individual scores, coefficients first then covariance parameters.
pub fn individual_scores<C: CovarianceModel>(stack: &RegressionStack, coef: &DVector<f64>, cov: &C) -> Result<Vec<DVector<f64>>> {
    let f = cov.factor()?;
    let derivs = cov.first_derivatives();
    let q = stack.n_coef();
    let m = derivs.len();
    let traces: Vec<f64> = derivs.iter().map(|d| (&f.inverse * d).trace()).collect();
    let mut out = Vec::with_capacity(stack.n_individuals());
    for i in 0..stack.n_individuals() {
        let u = stack.residual(i, coef);
        let r = &f.inverse * &u;
        let mut g = DVector::<f64>::zeros(q + m);
        g.rows_mut(0, q).copy_from(&(stack.designs[i].transpose() * &r));
        for (k, d) in derivs.iter().enumerate() {
            g[q + k] = -0.5 * traces[k] + 0.5 * (d * &r).dot(&r);
        }
        out.push(g);
    }
    Ok(out)
}

/// Total score.
pub fn score<C: CovarianceModel>(stack: &RegressionStack, coef: &DVector<f64>, cov: &C) -> Result<DVector<f64>> {
    let scores = individual_scores(stack, coef, cov)?;
    let mut total = DVector::<f64>::zeros(stack.n_coef() + cov.n_params());
    for g in &scores {
        total += g;
    }
    Ok(total)
}

/// Total Hessian of the log-likelihood.
pub fn hessian<C: CovarianceModel>(stack: &RegressionStack, coef: &DVector<f64>, cov: &C) -> Result<DMatrix<f64>> {
    let f = cov.factor()?;
    let derivs = cov.first_derivatives();
    let q = stack.n_coef();
    let m = derivs.len();
    let n = stack.n_individuals() as f64;
    let dim = cov.dim();
    let mut h = DMatrix::<f64>::zeros(q + m, q + m);
    let mut rr = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..stack.n_individuals() {
        let w = &stack.designs[i];
        let u = stack.residual(i, coef);
        let r = &f.inverse * &u;
        let winv = &f.inverse * w;
        let gg = w.transpose() * &winv;
        let mut block = h.view_mut((0, 0), (q, q));
        block -= &gg;
        for (k, d) in derivs.iter().enumerate() {
            let col = winv.transpose() * (d * &r);
            for a in 0..q {
                h[(a, q + k)] -= col[a];
            }
        }
        rr.ger(1.0, &r, &r, 1.0);
    }
    let a: Vec<DMatrix<f64>> = derivs.iter().map(|d| &f.inverse * d).collect();
    let b: Vec<DMatrix<f64>> = derivs.iter().map(|d| &rr * d).collect();
    let trace_prod = |x: &DMatrix<f64>, y: &DMatrix<f64>| -> f64 { x.component_mul(&y.transpose()).sum() };
    for j in 0..m {
        for k in j..m {
            // sum_i r_i' M_k S^-1 M_j r_i = tr(S^-1 M_j R M_k)
            let mut v = 0.5 * n * trace_prod(&a[j], &a[k]) - trace_prod(&a[j], &b[k]);
            if let Some(mjk) = cov.second_derivative(j, k) {
                v += -0.5 * n * (&f.inverse * &mjk).trace() + 0.5 * (&rr * &mjk).trace();
            }
            h[(q + j, q + k)] = v;
            h[(q + k, q + j)] = v;
        }
    }
    for a_ in 0..q {
        for k in 0..m {
            h[(q + k, a_)] = h[(a_, q + k)];
        }
    }
    Ok(h)
}

/// Robust covariance `H^-1 I H^-1 / N` with `H` and `I` averaged over individuals.
#[derive(Debug, Clone)]
pub struct Sandwich {
    pub covariance: DMatrix<f64>,
    pub hessian: DMatrix<f64>,
    pub outer_product: DMatrix<f64>,
    pub hessian_negative_definite: bool,
}

pub fn sandwich<C: CovarianceModel>(stack: &RegressionStack, coef: &DVector<f64>, cov: &C) -> Result<Sandwich> {
    let n = stack.n_individuals() as f64;
    let hessian = hessian(stack, coef, cov)? / n;
    let scores = individual_scores(stack, coef, cov)?;
    let dim = hessian.nrows();
    let mut outer = DMatrix::<f64>::zeros(dim, dim);
    for g in &scores {
        outer.ger(1.0 / n, g, g, 1.0);
    }
    let neg = -&hessian;
    let negative_definite = neg.clone().cholesky().is_some();
    let hinv = match neg.cholesky() {
        Some(c) => -c.inverse(),
        None => hessian.clone().try_inverse().ok_or(Error::SingularHessian)?,
    };
    if hinv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularHessian);
    }
    let mut covariance = &hinv * &outer * &hinv / n;
    linalg::symmetrize(&mut covariance);
    Ok(Sandwich { covariance, hessian, outer_product: outer, hessian_negative_definite: negative_definite })
}

/// GLS coefficients `(sum W' S^-1 W)^-1 sum W' S^-1 y` for a given `S^-1`.
pub fn gls(stack: &RegressionStack, inverse: &DMatrix<f64>) -> Result<DVector<f64>> {
    let q = stack.n_coef();
    let mut gram = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    for i in 0..stack.n_individuals() {
        let wt = stack.designs[i].transpose() * inverse;
        gram += &wt * &stack.designs[i];
        rhs += &wt * &stack.responses[i];
    }
    linalg::symmetrize(&mut gram);
    linalg::spd_solve(&gram, &rhs)
}

/// Cross-product sums for repeated GLS solves on one stack.
///
/// With `C_st = sum_i W_is' W_it` and `D_st = sum_i W_is' y_it` (rows `s`, `t`),
/// `sum_i W_i' S^-1 W_i = sum_st S^st C_st`, so each solve costs `O(T^2 q^2)`
/// regardless of the number of individuals.
#[derive(Debug, Clone)]
pub struct GlsMoments {
    t: usize,
    /// `C_ss` on the diagonal and `C_st + C_ts` for `s < t`, row-major over `s <= t`.
    cross: Vec<DMatrix<f64>>,
    /// `D_st` for all `(s, t)`, row-major.
    rhs: Vec<DVector<f64>>,
}

impl GlsMoments {
    pub fn new(stack: &RegressionStack) -> Self {
        let (t, q) = (stack.n_rows(), stack.n_coef());
        let mut full = vec![DMatrix::<f64>::zeros(q, q); t * t];
        let mut rhs = vec![DVector::<f64>::zeros(q); t * t];
        for i in 0..stack.n_individuals() {
            let w = &stack.designs[i];
            let y = &stack.responses[i];
            let rows: Vec<DVector<f64>> = (0..t).map(|s| w.row(s).transpose()).collect();
            for s in 0..t {
                for r in 0..t {
                    if r >= s {
                        full[s * t + r].ger(1.0, &rows[s], &rows[r], 1.0);
                    }
                    rhs[s * t + r].axpy(y[r], &rows[s], 1.0);
                }
            }
        }
        let mut cross = Vec::with_capacity(t * (t + 1) / 2);
        for s in 0..t {
            for r in s..t {
                let c = &full[s * t + r];
                cross.push(if r == s { c.clone() } else { c + c.transpose() });
            }
        }
        Self { t, cross, rhs }
    }

    /// GLS coefficients for `S^-1 = inverse`.
    pub fn solve(&self, inverse: &DMatrix<f64>) -> Result<DVector<f64>> {
        let t = self.t;
        let q = self.rhs[0].len();
        let mut gram = DMatrix::<f64>::zeros(q, q);
        let mut rhs = DVector::<f64>::zeros(q);
        let mut k = 0;
        for s in 0..t {
            for r in s..t {
                gram += &self.cross[k] * inverse[(s, r)];
                k += 1;
            }
            for r in 0..t {
                rhs.axpy(inverse[(s, r)], &self.rhs[s * t + r], 1.0);
            }
        }
        linalg::symmetrize(&mut gram);
        linalg::spd_solve(&gram, &rhs)
    }
}

/// Pooled OLS on the stacked system.
pub fn ols(stack: &RegressionStack) -> Result<DVector<f64>> {
    gls(stack, &DMatrix::identity(stack.n_rows(), stack.n_rows()))
}

/// `sum_i u_i u_i' / N`.
pub fn residual_moment(stack: &RegressionStack, coef: &DVector<f64>) -> DMatrix<f64> {
    let t = stack.n_rows();
    let n = stack.n_individuals() as f64;
    let mut m = DMatrix::<f64>::zeros(t, t);
    for i in 0..stack.n_individuals() {
        let u = stack.residual(i, coef);
        m.ger(1.0 / n, &u, &u, 1.0);
    }
    linalg::symmetrize(&mut m);
    m
}

/// Largest `|new - old| / (1 + |old|)` across paired parameter slices.
pub fn max_relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter().zip(new).map(|(a, b)| (b - a).abs() / (1.0 + a.abs())).fold(0.0, f64::max)
}

/// Outcome of alternating GLS and `S = sum u u' / N` updates.
#[derive(Debug, Clone)]
pub struct UnrestrictedFit {
    pub coef: DVector<f64>,
    pub cov: UnrestrictedCov,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterated FGLS with an unrestricted error covariance.
pub fn iterate_unrestricted(stack: &RegressionStack, start: DVector<f64>, tol: f64, max_iter: usize) -> Result<UnrestrictedFit> {
    let t = stack.n_rows();
    if stack.n_individuals() <= t + stack.n_coef() {
        log::warn!(
            "N = {} is small relative to T + dim(coef) = {}; unrestricted covariance may be singular",
            stack.n_individuals(),
            t + stack.n_coef()
        );
    }
    let moments = GlsMoments::new(stack);
    let mut coef = start;
    let mut cov = UnrestrictedCov(residual_moment(stack, &coef));
    let mut factor = cov.factor()?;
    let mut trace = vec![loglik_with_factor(stack, &coef, &factor)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let new_coef = moments.solve(&factor.inverse)?;
        let new_cov = UnrestrictedCov(residual_moment(stack, &new_coef));
        let mut old = coef.as_slice().to_vec();
        old.extend(cov.params());
        let mut new = new_coef.as_slice().to_vec();
        new.extend(new_cov.params());
        let change = max_relative_change(&old, &new);
        coef = new_coef;
        cov = new_cov;
        factor = cov.factor()?;
        trace.push(loglik_with_factor(stack, &coef, &factor));
        if change < tol {
            converged = true;
            break;
        }
    }
    let loglik = *trace.last().unwrap();
    Ok(UnrestrictedFit { coef, cov, loglik, loglik_trace: trace, iterations, converged })
}
