use std::io::Write;

use serde::Serialize;

use super::DgpConfig;
use crate::error::Result;
use crate::fit::Estimator;

/// Bias and RMSE of `delta` for one estimator on one design cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub estimator: Estimator,
    pub delta0: f64,
    pub sigma_zeta: f64,
    pub t0: usize,
    pub reps: usize,
    pub failures: usize,
    pub bias: f64,
    pub rmse: f64,
    #[serde(skip)]
    pub estimates: Option<Vec<f64>>,
}

impl McReport {
    pub fn from_estimates(estimator: Estimator, cfg: &DgpConfig, estimates: &[f64], failures: usize, keep: bool) -> Self {
        let n = estimates.len() as f64;
        let (bias, rmse) = if estimates.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let bias = estimates.iter().map(|d| d - cfg.delta0).sum::<f64>() / n;
            let mse = estimates.iter().map(|d| (d - cfg.delta0).powi(2)).sum::<f64>() / n;
            (bias, mse.sqrt())
        };
        Self {
            estimator,
            delta0: cfg.delta0,
            sigma_zeta: cfg.sigma_zeta,
            t0: cfg.t0,
            reps: cfg.reps,
            failures,
            bias,
            rmse,
            estimates: keep.then(|| estimates.to_vec()),
        }
    }

    pub fn reps_used(&self) -> usize {
        self.reps - self.failures
    }
}

/// Four-decimal formatting shared by every table.
pub fn fmt4(v: f64) -> String {
    if v.is_finite() {
        let s = format!("{v:.4}");
        if s == "-0.0000" { "0.0000".into() } else { s }
    } else {
        "NA".into()
    }
}

pub fn write_csv<W: Write>(out: W, reports: &[McReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "delta0", "sigma_zeta", "t0", "reps", "failures", "bias", "rmse"])
        .map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.estimator.as_str().to_string(),
            r.delta0.to_string(),
            r.sigma_zeta.to_string(),
            r.t0.to_string(),
            r.reps.to_string(),
            r.failures.to_string(),
            r.bias.to_string(),
            r.rmse.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Invalid(format!("{other:?}")),
    }
}

fn label(e: Estimator) -> &'static str {
    match e {
        Estimator::Dgmm => "DGMM",
        Estimator::Sgmm => "SGMM",
        Estimator::LqmlEcme => "LQML",
        Estimator::LqmlUnrestricted => "LQML_unrestricted",
        Estimator::DqmlX => "DQML_x",
        Estimator::DqmlDx => "DQML_dx",
        Estimator::DqmlUnrestricted => "DQML_unrestricted",
    }
}

fn unique<T: PartialEq + Copy>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for v in items {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// One panel per `sigma_zeta`, a bias and an rmse row per estimator, one column per `delta0`.
pub fn markdown_table(reports: &[McReport]) -> String {
    let mut s = String::new();
    let t0s = unique(reports.iter().map(|r| r.t0));
    let reps = unique(reports.iter().map(|r| r.reps));
    let t0_label = t0s.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ");
    let reps_label = reps.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ");
    s.push_str(&format!("# Bias and RMSE of delta estimates (t0 = {t0_label}, reps = {reps_label})\n"));
    let deltas = unique(reports.iter().map(|r| r.delta0));
    let estimators = unique(reports.iter().map(|r| r.estimator));
    for sz in unique(reports.iter().map(|r| r.sigma_zeta)) {
        s.push_str(&format!("\n## sigma_zeta = {sz}\n\n| estimator | statistic |"));
        for d in &deltas {
            s.push_str(&format!(" {d:.1} |"));
        }
        s.push_str("\n|---|---|");
        s.push_str(&"---:|".repeat(deltas.len()));
        s.push('\n');
        for &e in &estimators {
            let cell = |d: f64| reports.iter().find(|r| r.estimator == e && r.sigma_zeta == sz && r.delta0 == d);
            for (k, stat) in ["bias", "rmse"].iter().enumerate() {
                let name = if k == 0 { label(e) } else { "" };
                s.push_str(&format!("| {name} | {stat} |"));
                for &d in &deltas {
                    let v = cell(d).map_or(f64::NAN, |r| if k == 0 { r.bias } else { r.rmse });
                    s.push_str(&format!(" {} |", fmt4(v)));
                }
                s.push('\n');
            }
        }
        let failures: usize = reports.iter().filter(|r| r.sigma_zeta == sz).map(|r| r.failures).sum();
        if failures > 0 {
            s.push_str(&format!("\nFailed replications excluded: {failures}\n"));
        }
    }
    s
}
