//! Simulation experiments: bias and RMSE of the autoregressive coefficient
//! over a grid of designs, with seeded per-replication random streams.

mod dgp;
mod report;
mod rng;

pub use dgp::{generate_sample, simulate_paths, DgpConfig, SimulatedPaths};
pub use report::{markdown_table, write_csv, McReport};
pub use rng::Substream;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate;
use crate::fit::{Estimator, FitConfig};

pub const DELTA_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9];
pub const SIGMA_ZETA_GRID: [f64; 2] = [1.0, 4.0];

/// Estimators compared in the published experiment, in table order.
pub const TABLE_ESTIMATORS: [Estimator; 5] =
    [Estimator::Dgmm, Estimator::Sgmm, Estimator::LqmlEcme, Estimator::DqmlX, Estimator::DqmlDx];

/// Design cells of table 1 (`t0 = 50`) or table 2 (`t0 = 1`), `sigma_zeta`-major.
pub fn table_grid(table: u8, reps: usize, seed: u64) -> Result<Vec<DgpConfig>> {
    let t0 = match table {
        1 => 50,
        2 => 1,
        _ => return Err(Error::Invalid(format!("table must be 1 or 2, got {table}"))),
    };
    Ok(SIGMA_ZETA_GRID
        .iter()
        .flat_map(|&sigma_zeta| {
            DELTA_GRID.iter().map(move |&delta0| DgpConfig { delta0, sigma_zeta, t0, reps, seed, ..DgpConfig::default() })
        })
        .collect())
}

/// Estimates of `delta` for one replication; `None` marks a failure.
fn replicate(cfg: &DgpConfig, cell: usize, rep: usize, estimators: &[Estimator], fit_cfg: &FitConfig) -> Vec<Option<f64>> {
    let mut stream = Substream::new(cfg.seed, cell as u32, rep as u32);
    let ds = generate_sample(cfg, &mut stream);
    estimators
        .iter()
        .map(|&e| match estimate::run(&ds, e, fit_cfg) {
            Ok(out) if out.converged() && out.delta().is_finite() => Some(out.delta()),
            Ok(_) => {
                log::warn!("{e}: no convergence (cell {cell}, rep {rep})");
                None
            }
            Err(err) => {
                log::warn!("{e}: {err} (cell {cell}, rep {rep})");
                None
            }
        })
        .collect()
}

/// Runs every estimator on every replication of every cell.
///
/// Replication `r` of cell `c` always draws from `Substream::new(seed, c, r)` and
/// results are reduced in `(cell, rep)` order, so reports do not depend on `workers`.
pub fn run_grid(grid: &[DgpConfig], estimators: &[Estimator], workers: usize, keep_estimates: bool) -> Result<Vec<McReport>> {
    if grid.iter().any(|c| c.reps == 0) {
        return Err(Error::Invalid("reps must be at least 1".into()));
    }
    if estimators.is_empty() {
        return Err(Error::Invalid("no estimators selected".into()));
    }
    let fit_cfg = FitConfig { covariance: false, ..FitConfig::default() };
    let tasks: Vec<(usize, usize)> = grid.iter().enumerate().flat_map(|(c, cfg)| (0..cfg.reps).map(move |r| (c, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    let results: Vec<Vec<Option<f64>>> =
        pool.install(|| tasks.par_iter().map(|&(c, r)| replicate(&grid[c], c, r, estimators, &fit_cfg)).collect());

    let mut reports = Vec::with_capacity(grid.len() * estimators.len());
    let mut offset = 0;
    for cfg in grid {
        let cell = &results[offset..offset + cfg.reps];
        offset += cfg.reps;
        for (k, &e) in estimators.iter().enumerate() {
            let estimates: Vec<f64> = cell.iter().filter_map(|r| r[k]).collect();
            reports.push(McReport::from_estimates(e, cfg, &estimates, cfg.reps - estimates.len(), keep_estimates));
        }
    }
    Ok(reports)
}
