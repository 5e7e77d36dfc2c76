//! Differenced (Arellano–Bond) and system (Blundell–Bond) GMM for `p = 1`.
//!
//! Differenced equations `t = 2..T` use `y_{i0}, ..., y_{i,t-2}` as GMM-style
//! instruments. Strictly exogenous regressors enter either as the levels
//! `x_i1, ..., x_iT` in every differenced equation (the default) or as a single
//! IV-style `Delta x_it` column. The system variant adds
//! level equations `t = 2..T` instrumented by `Delta y_{i,t-1}`, the regressors
//! and a constant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::{matrix_rows, Estimator, FitDocument};
use crate::linalg;
use crate::panel_data::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmmVariant {
    Differenced,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmmSteps {
    OneStep,
    TwoStep,
}

/// How the regressors enter the instrument set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XTreatment {
    /// `x_i1, ..., x_iT` as GMM-style instruments for each differenced equation.
    StrictlyExogenousGmm,
    /// One `Delta x_it` column per regressor in the differenced block.
    StrictlyExogenousIV,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GmmSpec {
    pub variant: GmmVariant,
    pub steps: GmmSteps,
    /// Most recent lags of `y` used per differenced equation; `None` uses all.
    pub instrument_cap: Option<usize>,
    pub x_treatment: XTreatment,
}

impl GmmSpec {
    pub fn new(variant: GmmVariant) -> Self {
        Self { variant, steps: GmmSteps::OneStep, instrument_cap: None, x_treatment: XTreatment::StrictlyExogenousGmm }
    }

    pub fn estimator(&self) -> Estimator {
        match self.variant {
            GmmVariant::Differenced => Estimator::Dgmm,
            GmmVariant::System => Estimator::Sgmm,
        }
    }
}

/// Per-individual responses, regressors and instruments of the stacked GMM system.
#[derive(Debug, Clone)]
pub struct GmmSystem {
    pub responses: Vec<DVector<f64>>,
    pub regressors: Vec<DMatrix<f64>>,
    pub instruments: Vec<DMatrix<f64>>,
    /// One-step weighting kernel shared by all individuals.
    pub kernel: DMatrix<f64>,
    pub coefficient_names: Vec<String>,
    /// Number of GMM-style `y` instrument columns.
    pub y_instruments: usize,
}

impl GmmSystem {
    pub fn instrument_count(&self) -> usize {
        self.instruments[0].ncols()
    }

    pub fn n_individuals(&self) -> usize {
        self.responses.len()
    }
}

/// Differenced-equation `y` instruments for `t = 2..T`.
pub fn differenced_y_instrument_count(t: usize, cap: Option<usize>) -> usize {
    (2..=t).map(|s| cap.map_or(s - 1, |c| c.min(s - 1))).sum()
}

pub fn build_instruments(ds: &PanelDataset, spec: &GmmSpec) -> Result<GmmSystem> {
    if ds.lag_order() != 1 {
        return Err(Error::UnsupportedLagOrder(ds.lag_order()));
    }
    let (n, t, k) = (ds.n_individuals(), ds.n_periods(), ds.n_regressors());
    if t < 3 {
        return Err(Error::InsufficientMoments(format!("GMM needs T >= 3, got T = {t}")));
    }
    if spec.instrument_cap == Some(0) {
        return Err(Error::InsufficientMoments("instrument cap must be positive".into()));
    }
    let system = spec.variant == GmmVariant::System;
    let m = t - 1;
    let lags = |s: usize| spec.instrument_cap.map_or(s - 1, |c| c.min(s - 1));
    let y_cols = differenced_y_instrument_count(t, spec.instrument_cap);
    let x_gmm = spec.x_treatment == XTreatment::StrictlyExogenousGmm;
    let dcols = y_cols + if x_gmm { m * t * k } else { k };
    let lcols = if system { m + k + 1 } else { 0 };
    let rows = if system { 2 * m } else { m };
    let ncoef = 1 + k + usize::from(system);
    if dcols + lcols < ncoef {
        return Err(Error::InsufficientMoments(format!("{} instruments for {ncoef} coefficients", dcols + lcols)));
    }

    let mut responses = Vec::with_capacity(n);
    let mut regressors = Vec::with_capacity(n);
    let mut instruments = Vec::with_capacity(n);
    for i in 0..n {
        let mut y = DVector::<f64>::zeros(rows);
        let mut x = DMatrix::<f64>::zeros(rows, ncoef);
        let mut z = DMatrix::<f64>::zeros(rows, dcols + lcols);
        let mut col = 0;
        for s in 2..=t {
            let r = s - 2;
            let st = s as isize;
            y[r] = ds.y(i, st) - ds.y(i, st - 1);
            x[(r, 0)] = ds.y(i, st - 1) - ds.y(i, st - 2);
            for c in 0..k {
                let dx = ds.x(i, s, c) - ds.x(i, s - 1, c);
                x[(r, 1 + c)] = dx;
                if x_gmm {
                    for u in 1..=t {
                        z[(r, y_cols + (r * k + c) * t + u - 1)] = ds.x(i, u, c);
                    }
                } else {
                    z[(r, y_cols + c)] = dx;
                }
            }
            // most recent admissible lags: y_{s-2}, y_{s-3}, ...
            let l = lags(s);
            for j in 0..l {
                z[(r, col + j)] = ds.y(i, st - 2 - j as isize);
            }
            col += l;
            if system {
                let r = m + s - 2;
                y[r] = ds.y(i, st);
                x[(r, 0)] = ds.y(i, st - 1);
                for c in 0..k {
                    x[(r, 1 + c)] = ds.x(i, s, c);
                    z[(r, dcols + m + c)] = ds.x(i, s, c);
                }
                x[(r, 1 + k)] = 1.0;
                z[(r, dcols + s - 2)] = ds.y(i, st - 1) - ds.y(i, st - 2);
                z[(r, dcols + m + k)] = 1.0;
            }
        }
        responses.push(y);
        regressors.push(x);
        instruments.push(z);
    }
    let mut kernel = DMatrix::<f64>::identity(rows, rows);
    for r in 0..m {
        kernel[(r, r)] = 2.0;
        if r + 1 < m {
            kernel[(r, r + 1)] = -1.0;
            kernel[(r + 1, r)] = -1.0;
        }
    }
    let mut coefficient_names = vec!["delta1".to_string()];
    coefficient_names.extend((1..=k).map(|c| format!("beta{c}")));
    if system {
        coefficient_names.push("mu".into());
    }
    Ok(GmmSystem { responses, regressors, instruments, kernel, coefficient_names, y_instruments: y_cols + if system { m } else { 0 } })
}

/// GMM estimate of `(delta, beta[, mu])`.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub spec: GmmSpec,
    pub coefficient_names: Vec<String>,
    pub coefficients: DVector<f64>,
    /// Robust covariance of the coefficients for the final weight matrix.
    pub covariance: DMatrix<f64>,
    /// Weight matrix of the final step.
    pub weight: DMatrix<f64>,
    pub instrument_count: usize,
    /// A weight matrix was singular and replaced by its pseudo-inverse.
    pub weight_pinv: bool,
}

impl GmmFit {
    pub fn delta(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|k| self.covariance[(k, k)].max(0.0).sqrt()).collect()
    }

    pub fn document(&self) -> FitDocument {
        FitDocument {
            estimator: self.spec.estimator(),
            coefficient_names: self.coefficient_names.clone(),
            gamma: self.coefficients.iter().copied().collect(),
            standard_errors: Some(self.standard_errors()),
            omega: None,
            loglik: None,
            iterations: match self.spec.steps {
                GmmSteps::OneStep => 1,
                GmmSteps::TwoStep => 2,
            },
            converged: true,
            sigma_a_zeroed: false,
            cov_sandwich: Some(matrix_rows(&self.covariance)),
            hessian_negative_definite: None,
            instrument_count: Some(self.instrument_count),
            weight_pinv: Some(self.weight_pinv),
        }
    }
}

const PINV_TOL: f64 = 1e-12;

fn invert_weight(a: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    match linalg::spd_inverse_logdet(a, "GMM weight") {
        Ok((inv, _)) if inv.iter().all(|v| v.is_finite()) => (inv, false),
        _ => {
            let (p, _) = linalg::pinv_symmetric(a, PINV_TOL);
            log::warn!("singular GMM weight matrix; using rank-truncated pseudo-inverse");
            (p, true)
        }
    }
}

struct Moments {
    zx: DMatrix<f64>,
    zy: DVector<f64>,
}

fn moments(sys: &GmmSystem) -> Moments {
    let l = sys.instrument_count();
    let q = sys.regressors[0].ncols();
    let mut zx = DMatrix::<f64>::zeros(l, q);
    let mut zy = DVector::<f64>::zeros(l);
    for i in 0..sys.n_individuals() {
        let zt = sys.instruments[i].transpose();
        zx += &zt * &sys.regressors[i];
        zy += &zt * &sys.responses[i];
    }
    Moments { zx, zy }
}

fn solve(m: &Moments, w: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let xzw = m.zx.transpose() * w;
    let mut a = &xzw * &m.zx;
    linalg::symmetrize(&mut a);
    let b = linalg::spd_solve(&a, &(&xzw * &m.zy))?;
    let (ainv, _) = linalg::spd_inverse_logdet(&a, "GMM normal equations")?;
    Ok((b, ainv))
}

fn residual_moment(sys: &GmmSystem, b: &DVector<f64>) -> DMatrix<f64> {
    let l = sys.instrument_count();
    let mut s = DMatrix::<f64>::zeros(l, l);
    for i in 0..sys.n_individuals() {
        let u = &sys.responses[i] - &sys.regressors[i] * b;
        let zu = sys.instruments[i].transpose() * u;
        s.ger(1.0, &zu, &zu, 1.0);
    }
    linalg::symmetrize(&mut s);
    s
}

/// GMM on a prebuilt instrument system.
pub fn fit_system(sys: &GmmSystem, spec: &GmmSpec) -> Result<GmmFit> {
    let m = moments(sys);
    let l = sys.instrument_count();
    let mut zhz = DMatrix::<f64>::zeros(l, l);
    for z in &sys.instruments {
        zhz += z.transpose() * &sys.kernel * z;
    }
    linalg::symmetrize(&mut zhz);
    let (mut w, mut pinv) = invert_weight(&zhz);
    let (mut b, mut ainv) = solve(&m, &w)?;
    if spec.steps == GmmSteps::TwoStep {
        let (w2, p2) = invert_weight(&residual_moment(sys, &b));
        w = w2;
        pinv |= p2;
        let r = solve(&m, &w)?;
        b = r.0;
        ainv = r.1;
    }
    // robust sandwich around the final weight matrix
    let s = residual_moment(sys, &b);
    let xzw = m.zx.transpose() * &w;
    let mut covariance = &ainv * (&xzw * s * xzw.transpose()) * &ainv;
    linalg::symmetrize(&mut covariance);
    Ok(GmmFit {
        spec: *spec,
        coefficient_names: sys.coefficient_names.clone(),
        coefficients: b,
        covariance,
        weight: w,
        instrument_count: l,
        weight_pinv: pinv,
    })
}

pub fn fit_gmm(ds: &PanelDataset, spec: &GmmSpec) -> Result<GmmFit> {
    fit_system(&build_instruments(ds, spec)?, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(t: usize) -> PanelDataset {
        let n = 30;
        let y = (0..n).map(|i| (0..=t).map(|s| ((i * 13 + s * 7) % 11) as f64 * 0.3 + (s as f64 * 0.5).sin()).collect()).collect();
        let x = (0..n).map(|i| DMatrix::from_fn(t, 1, |r, _| ((i * 5 + r * 3) % 7) as f64 * 0.2)).collect();
        PanelDataset::new(y, x, 1, None).unwrap()
    }

    #[test]
    fn instrument_counts() {
        assert_eq!(differenced_y_instrument_count(10, None), 45);
        assert_eq!(differenced_y_instrument_count(3, None), 3);
        let iv = |v| GmmSpec { x_treatment: XTreatment::StrictlyExogenousIV, ..GmmSpec::new(v) };
        let d = build_instruments(&panel(10), &iv(GmmVariant::Differenced)).unwrap();
        assert_eq!(d.y_instruments, 45);
        assert_eq!(d.instrument_count(), 46);
        let s = build_instruments(&panel(10), &iv(GmmVariant::System)).unwrap();
        assert_eq!(s.y_instruments - d.y_instruments, 9);
        assert_eq!(s.instruments[0].shape(), (18, 46 + 9 + 1 + 1));
        let g = build_instruments(&panel(10), &GmmSpec::new(GmmVariant::Differenced)).unwrap();
        assert_eq!(g.instrument_count(), 45 + 9 * 10);
    }

    #[test]
    fn x_levels_fill_their_own_equation() {
        let ds = panel(5);
        let z = &build_instruments(&ds, &GmmSpec::new(GmmVariant::Differenced)).unwrap().instruments[1];
        let y_cols = differenced_y_instrument_count(5, None);
        // second differenced equation (t = 3) owns columns 5..10 of the x block
        for u in 1..=5 {
            assert_eq!(z[(1, y_cols + 5 + u - 1)], ds.x(1, u, 0));
            assert_eq!(z[(0, y_cols + 5 + u - 1)], 0.0);
        }
    }

    #[test]
    fn short_panels_are_rejected() {
        let ds = PanelDataset::new(vec![vec![0.0, 1.0, 2.0]; 3], vec![DMatrix::zeros(2, 0); 3], 1, None).unwrap();
        assert!(matches!(build_instruments(&ds, &GmmSpec::new(GmmVariant::Differenced)), Err(Error::InsufficientMoments(_))));
    }

    #[test]
    fn capped_instruments() {
        let spec = GmmSpec { instrument_cap: Some(2), ..GmmSpec::new(GmmVariant::Differenced) };
        let d = build_instruments(&panel(6), &spec).unwrap();
        assert_eq!(d.y_instruments, 1 + 2 + 2 + 2 + 2);
        let z = &d.instruments[0];
        // equation t = 4 uses y_2 and y_1
        let ds = panel(6);
        assert_eq!(z[(2, 3)], ds.y(0, 2));
        assert_eq!(z[(2, 4)], ds.y(0, 1));
    }
}
