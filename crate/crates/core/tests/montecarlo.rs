use dynpanel::montecarlo::{run_grid, simulate_paths, table_grid, write_csv, DgpConfig, McReport, Substream};
use dynpanel::Estimator;

const SQRT3: f64 = 1.732_050_807_568_877_2;

fn moments(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let skew = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n / var.powf(1.5);
    (mean, var, skew)
}

#[test]
fn chi_square_draws_have_textbook_moments() {
    let mut s = Substream::new(11, 0, 0);
    let draws: Vec<f64> = (0..200_000).map(|_| s.chi_square(5)).collect();
    let (mean, var, skew) = moments(&draws);
    assert!(draws.iter().all(|d| *d > 0.0));
    assert!((mean - 5.0).abs() < 0.03, "mean {mean}");
    assert!((var - 10.0).abs() < 0.2, "variance {var}");
    // skewness of chi2(k) is sqrt(8 / k)
    assert!((skew - (8.0f64 / 5.0).sqrt()).abs() < 0.05, "skewness {skew}");
}

#[test]
fn regressor_innovations_are_unit_variance_uniforms() {
    let cfg = DgpConfig { n_individuals: 20_000, ..DgpConfig::default() };
    let paths = simulate_paths(&cfg, &mut Substream::new(12, 0, 0));
    let xi: Vec<f64> = paths.x.iter().flat_map(|x| x.windows(2).map(|w| w[1] - 0.5 - 0.5 * w[0]).collect::<Vec<_>>()).collect();
    assert!(xi.iter().all(|e| e.abs() < SQRT3 + 1e-12));
    let (mean, var, _) = moments(&xi);
    assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.02, "mean {mean}, variance {var}");
}

/// Cross-section average of `v_it^2` at every observed period.
fn v_profile(t0: usize) -> Vec<f64> {
    let cfg = DgpConfig { n_individuals: 20_000, t0, ..DgpConfig::default() };
    let paths = simulate_paths(&cfg, &mut Substream::new(13, t0 as u32, 0));
    (1..=cfg.n_periods).map(|t| paths.v.iter().map(|v| v[t] * v[t]).sum::<f64>() / cfg.n_individuals as f64).collect()
}

#[test]
fn error_variance_tracks_the_regressor() {
    // Var(v_it) = E x_it^2: flat near 1 + 4/3 after a long burn-in, decaying from the start-up level otherwise.
    let long = v_profile(50);
    for v in &long {
        assert!((v / (7.0 / 3.0) - 1.0).abs() < 0.1, "{long:?}");
    }
    let short = v_profile(1);
    assert!(short[0] > 4.0 * short[9], "{short:?}");
    assert!(short[..5].windows(2).all(|w| w[1] < w[0]), "{short:?}");
}

#[test]
fn effects_are_right_skewed() {
    let cfg = DgpConfig { n_individuals: 20_000, sigma_zeta: 4.0, ..DgpConfig::default() };
    let paths = simulate_paths(&cfg, &mut Substream::new(14, 0, 0));
    let noise: Vec<f64> = paths
        .c
        .iter()
        .zip(&paths.x)
        .map(|(c, x)| c - x.iter().map(|v| v.abs().ln()).sum::<f64>() / x.len() as f64)
        .collect();
    let (mean, var, skew) = moments(&noise);
    assert!(mean.abs() < 0.1 && (var / 16.0 - 1.0).abs() < 0.05);
    assert!(skew > 0.9, "skewness {skew}");
}

#[test]
fn bias_and_rmse_of_constant_estimates() {
    let cfg = DgpConfig { delta0: 0.4, ..DgpConfig::default() };
    let exact = McReport::from_estimates(Estimator::Dgmm, &cfg, &[0.4; 7], 0, false);
    assert_eq!((exact.bias, exact.rmse), (0.0, 0.0));
    let shifted = McReport::from_estimates(Estimator::Dgmm, &cfg, &[0.5, 0.5, 0.5, 0.5], 1, true);
    assert!((shifted.bias - 0.1).abs() < 1e-15 && (shifted.rmse - 0.1).abs() < 1e-15);
    assert_eq!(shifted.reps_used(), cfg.reps - 1);
    assert!(McReport::from_estimates(Estimator::Dgmm, &cfg, &[], 500, false).bias.is_nan());
}

fn small_grid() -> Vec<DgpConfig> {
    let mut grid = table_grid(2, 3, 77).unwrap();
    grid.truncate(4);
    for g in &mut grid {
        g.n_individuals = 60;
    }
    grid
}

fn csv(reports: &[McReport]) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(&mut out, reports).unwrap();
    out
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let est = [Estimator::Dgmm, Estimator::LqmlEcme, Estimator::DqmlX];
    let a = run_grid(&small_grid(), &est, 1, true).unwrap();
    let b = run_grid(&small_grid(), &est, 3, true).unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert_eq!(a.len(), 12);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.estimates, y.estimates);
    }
    let other_seed: Vec<_> = small_grid().into_iter().map(|g| DgpConfig { seed: 78, ..g }).collect();
    assert_ne!(csv(&a), csv(&run_grid(&other_seed, &est, 1, false).unwrap()));
}

#[test]
fn grid_validation() {
    assert!(table_grid(3, 10, 1).is_err());
    let g = table_grid(1, 10, 1).unwrap();
    assert_eq!(g.len(), 12);
    assert!(g.iter().all(|c| c.t0 == 50 && c.n_individuals == 200 && c.n_periods == 10));
    let mut zero = small_grid();
    zero[0].reps = 0;
    assert!(run_grid(&zero, &[Estimator::Dgmm], 1, false).is_err());
    assert!(run_grid(&small_grid(), &[], 1, false).is_err());
}
