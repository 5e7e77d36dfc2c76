//! Self-checks of the exact algebraic identities and analytic derivatives.

use std::fmt;
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};

use crate::companion::{build_aj_bj, build_dj, reversal, CompanionMatrices};
use crate::differenced_qml::{phi_head, PhiCov};
use crate::levels_qml::StructuredOmega;
use crate::likelihood::{self, CovarianceModel, UnrestrictedCov};
use crate::montecarlo::Substream;
use crate::panel_data::RegressionStack;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Reconstruction,
    Traces,
    Determinant,
    Gradient,
    Hessian,
}

impl Check {
    pub const ALL: [Check; 5] = [Check::Reconstruction, Check::Traces, Check::Determinant, Check::Gradient, Check::Hessian];

    pub fn name(self) -> &'static str {
        match self {
            Check::Reconstruction => "reconstruction",
            Check::Traces => "traces",
            Check::Determinant => "determinant",
            Check::Gradient => "gradient",
            Check::Hessian => "hessian",
        }
    }

    pub fn parse(s: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub checks: Vec<Check>,
    /// Matrix dimensions for the determinant identity.
    pub dims: RangeInclusive<usize>,
    /// Relative error injected into every analytic quantity (test hook).
    pub perturb: f64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { checks: Check::ALL.to_vec(), dims: 2..=10, perturb: 0.0, seed: 20_240_917 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub check: Check,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<15} {}  max error {:.3e} (tolerance {:.1e})",
            self.check.name(),
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_error,
            self.tolerance
        )
    }
}

pub fn run_checks(opts: &VerifyOptions) -> Vec<CheckResult> {
    opts.checks
        .iter()
        .map(|&check| {
            let mut rng = Substream::new(opts.seed, check as u32, 0);
            let (max_error, tolerance) = match check {
                Check::Reconstruction => (reconstruction_error(&mut rng, 100, opts.perturb), 2f64.powi(-40)),
                Check::Traces => (trace_error(&mut rng, opts.perturb), 0.0),
                Check::Determinant => (determinant_error(opts.dims.clone(), opts.perturb), 1e-10),
                Check::Gradient => (gradient_error(&mut rng, 20, opts.perturb), 1e-5),
                Check::Hessian => (hessian_error(&mut rng, 20, opts.perturb), 1e-4),
            };
            CheckResult { check, max_error, tolerance }
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn normal_vec(rng: &mut Substream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Stationary-ish random lag coefficients.
fn random_delta(rng: &mut Substream, p: usize) -> Vec<f64> {
    (0..p).map(|_| (2.0 * rng.uniform() - 1.0) * 0.9 / p as f64).collect()
}

/// Levels and differenced companion-form reconstructions of `y_{-j}` on
/// simulated AR(p) paths with `T = 6`.
pub fn reconstruction_error(rng: &mut Substream, trials: usize, perturb: f64) -> f64 {
    let t = 6;
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let p = 1 + trial % 2;
        let k = 2;
        let delta = random_delta(rng, p);
        let beta = normal_vec(rng, k);
        // y[s] holds period s - p + 1 for s = 0..t + p
        let mut y = normal_vec(rng, p);
        y.resize(t + p, 0.0);
        let mut w = vec![0.0; t];
        for s in 1..=t {
            let x = normal_vec(rng, k);
            let e = rng.normal();
            w[s - 1] = x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + e;
            let idx = s + p - 1;
            y[idx] = w[s - 1] + (1..=p).map(|j| delta[j - 1] * y[idx - j]).sum::<f64>();
        }
        let period = |s: isize| y[(s + p as isize - 1) as usize];
        let y_o = DVector::from_fn(p, |r, _| period(-(r as isize)));
        let wv = DVector::from_column_slice(&w);
        let cm = CompanionMatrices::new(&delta, t);
        for j in 1..=p {
            let lag = &cm.a[j - 1] * &y_o + &cm.b[j - 1] * &wv;
            for r in 0..t {
                let truth = period(r as isize + 1 - j as isize);
                worst = worst.max(rel_err(lag[r] * (1.0 + perturb), truth));
            }
            // differenced: (0, dy_{-j}) = D_j (initial differences, dw_2..T)
            let dim = t + p - 1;
            let dy = |s: isize| period(s) - period(s - 1);
            let mut v = DVector::<f64>::zeros(dim);
            for r in 0..p {
                v[r] = dy(r as isize - p as isize + 2);
            }
            for s in 2..=t {
                v[p + s - 2] = w[s - 1] - w[s - 2];
            }
            let out = &cm.d[j - 1] * v;
            for r in 0..p {
                worst = worst.max(out[r].abs());
            }
            for s in 2..=t {
                let truth = dy(s as isize - j as isize);
                worst = worst.max(rel_err(out[p + s - 2] * (1.0 + perturb), truth));
            }
        }
    }
    worst
}

/// Largest `|tr B_j|`, `|tr D_j|` over random lag coefficients and admissible `(T, p, j)`.
pub fn trace_error(rng: &mut Substream, perturb: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for p in 1..=3 {
        for t in p + 1..=8 {
            let delta = random_delta(rng, p);
            for j in 1..=p {
                let (_, b) = build_aj_bj(&delta, t, j);
                let d = build_dj(&delta, t, j);
                worst = worst.max(b.trace().abs()).max(d.trace().abs());
                worst = worst.max((reversal(p).trace() - (p % 2) as f64).abs());
            }
        }
    }
    worst + perturb
}

/// Dense `det(sigma2 Phi)` against `sigma2^dim (1 + dim (phi - 1))`.
pub fn determinant_error(dims: RangeInclusive<usize>, perturb: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for dim in dims {
        if dim < 2 {
            continue;
        }
        let lo = 1.0 - 1.0 / dim as f64;
        for phi in [lo + 1e-3, 1.01, 2.0, 5.0] {
            let varpi = (phi - lo).ln();
            debug_assert!((phi_head(varpi, dim) - phi).abs() < 1e-12);
            for sigma2 in [0.5, 1.0, 3.0] {
                let cov = PhiCov { sigma2, varpi, dim };
                let dense = cov.dense().determinant();
                let closed = sigma2.powi(dim as i32) * (1.0 + dim as f64 * (phi - 1.0));
                let fast = cov.factor().map(|f| f.logdet.exp()).unwrap_or(f64::NAN);
                worst = worst.max(rel_err(dense * (1.0 + perturb), closed)).max(rel_err(fast, closed));
            }
        }
    }
    worst
}

/// Central finite-difference gradient with step `1e-6 (1 + |x_k|)`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = 1e-6 * (1.0 + x[k].abs());
            xs[k] = x[k] + h;
            let up = f(&xs);
            xs[k] = x[k] - h;
            let down = f(&xs);
            xs[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central finite-difference Jacobian of a vector function, columns by coordinate.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let m = f(x).len();
    let mut out = DMatrix::<f64>::zeros(m, x.len());
    let mut xs = x.to_vec();
    for k in 0..x.len() {
        let h = 1e-6 * (1.0 + x[k].abs());
        xs[k] = x[k] + h;
        let up = f(&xs);
        xs[k] = x[k] - h;
        let down = f(&xs);
        xs[k] = x[k];
        for r in 0..m {
            out[(r, k)] = (up[r] - down[r]) / (2.0 * h);
        }
    }
    out
}

/// `|a - b| / max(|a|, |b|, 1)`.
pub fn scaled_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// A random linear system with `n` individuals, `t` equations and `q` coefficients.
pub fn random_stack(rng: &mut Substream, n: usize, t: usize, q: usize) -> RegressionStack {
    let designs: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::from_fn(t, q, |_, _| rng.normal())).collect();
    let responses = designs.iter().map(|w| w * DVector::from_element(q, 0.3) + DVector::from_fn(t, |_, _| 1.5 * rng.normal())).collect();
    RegressionStack { responses, designs }
}

fn random_spd(rng: &mut Substream, t: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(t, t, |_, _| rng.normal());
    a.transpose() * &a / t as f64 + DMatrix::identity(t, t)
}

/// One random point of each covariance family: (stack, coefficients, model).
pub enum TestPoint {
    Unrestricted(RegressionStack, DVector<f64>, UnrestrictedCov),
    Structured(RegressionStack, DVector<f64>, StructuredOmega),
    Differenced(RegressionStack, DVector<f64>, PhiCov),
}

pub fn random_point(rng: &mut Substream, family: usize) -> TestPoint {
    let t = 3 + (rng.uniform() * 3.0) as usize;
    let q = 2 + (rng.uniform() * 3.0) as usize;
    let stack = random_stack(rng, 8, t, q);
    let coef = DVector::from_fn(q, |_, _| 0.3 + 0.2 * rng.normal());
    match family % 3 {
        0 => TestPoint::Unrestricted(stack, coef, UnrestrictedCov(random_spd(rng, t))),
        1 => {
            let sigma2 = (0..t).map(|_| 0.5 + rng.uniform() * 2.0).collect();
            TestPoint::Structured(stack, coef, StructuredOmega { sigma_a2: 0.2 + rng.uniform(), sigma2 })
        }
        _ => TestPoint::Differenced(stack, coef, PhiCov { sigma2: 0.5 + rng.uniform() * 2.0, varpi: rng.normal(), dim: t }),
    }
}

fn split<C: CovarianceModel>(cov: &C, q: usize, x: &[f64]) -> (DVector<f64>, C) {
    (DVector::from_column_slice(&x[..q]), cov.with_params(&x[q..]))
}

fn stack_point<C: CovarianceModel>(coef: &DVector<f64>, cov: &C) -> Vec<f64> {
    let mut x = coef.as_slice().to_vec();
    x.extend(cov.params());
    x
}

/// Worst scaled error of the analytic score against finite differences.
pub fn score_fd_error<C: CovarianceModel>(stack: &RegressionStack, coef: &DVector<f64>, cov: &C, perturb: f64) -> f64 {
    let q = coef.len();
    let x = stack_point(coef, cov);
    let analytic = likelihood::score(stack, coef, cov).expect("score at a positive-definite point");
    let fd = fd_gradient(
        |z| {
            let (c, m) = split(cov, q, z);
            likelihood::loglik(stack, &c, &m).unwrap_or(f64::NAN)
        },
        &x,
    );
    analytic.iter().zip(&fd).map(|(a, b)| scaled_error(a * (1.0 + perturb), *b)).fold(0.0, f64::max)
}

/// Worst scaled error of the analytic Hessian against differenced scores.
pub fn hessian_fd_error<C: CovarianceModel>(stack: &RegressionStack, coef: &DVector<f64>, cov: &C, perturb: f64) -> f64 {
    let q = coef.len();
    let x = stack_point(coef, cov);
    let analytic = likelihood::hessian(stack, coef, cov).expect("Hessian at a positive-definite point");
    let fd = fd_jacobian(
        |z| {
            let (c, m) = split(cov, q, z);
            likelihood::score(stack, &c, &m).map(|g| g.as_slice().to_vec()).unwrap_or_else(|_| vec![f64::NAN; z.len()])
        },
        &x,
    );
    analytic.iter().zip(fd.iter()).map(|(a, b)| scaled_error(a * (1.0 + perturb), *b)).fold(0.0, f64::max)
}

fn gradient_error(rng: &mut Substream, points: usize, perturb: f64) -> f64 {
    (0..points)
        .map(|k| match random_point(rng, k) {
            TestPoint::Unrestricted(s, c, m) => score_fd_error(&s, &c, &m, perturb),
            TestPoint::Structured(s, c, m) => score_fd_error(&s, &c, &m, perturb),
            TestPoint::Differenced(s, c, m) => score_fd_error(&s, &c, &m, perturb),
        })
        .fold(0.0, f64::max)
}

fn hessian_error(rng: &mut Substream, points: usize, perturb: f64) -> f64 {
    (0..points)
        .map(|k| match random_point(rng, k) {
            TestPoint::Unrestricted(s, c, m) => hessian_fd_error(&s, &c, &m, perturb),
            TestPoint::Structured(s, c, m) => hessian_fd_error(&s, &c, &m, perturb),
            TestPoint::Differenced(s, c, m) => hessian_fd_error(&s, &c, &m, perturb),
        })
        .fold(0.0, f64::max)
}
