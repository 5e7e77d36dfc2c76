use nalgebra::DMatrix;

use super::rng::Substream;
use crate::panel_data::PanelDataset;

/// One design cell of the simulation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub delta0: f64,
    pub beta0: f64,
    pub sigma_zeta: f64,
    /// Burn-in: the recursion starts at `t = -t0` from `y = 0`.
    pub t0: usize,
    pub n_periods: usize,
    pub n_individuals: usize,
    pub reps: usize,
    pub seed: u64,
    /// When false, `c_i = 0`.
    pub individual_effects: bool,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            delta0: 0.4,
            beta0: 0.5,
            sigma_zeta: 1.0,
            t0: 50,
            n_periods: 10,
            n_individuals: 200,
            reps: 500,
            seed: 1,
            individual_effects: true,
        }
    }
}

/// Full simulated paths for `t = 0..=T`, before the pre-sample split.
#[derive(Debug, Clone)]
pub struct SimulatedPaths {
    /// `y[i][t]` for `t = 0..=T`.
    pub y: Vec<Vec<f64>>,
    /// `x[i][t]` for `t = 0..=T`.
    pub x: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    /// `v[i][t]` for `t = 0..=T`.
    pub v: Vec<Vec<f64>>,
}

impl SimulatedPaths {
    /// QML view: `y_0` as pre-sample value and `(x_t, y_t)` for `t = 1..=T`.
    pub fn dataset(&self) -> PanelDataset {
        let t = self.x[0].len() - 1;
        let x = self.x.iter().map(|xi| DMatrix::from_fn(t, 1, |r, _| xi[r + 1])).collect();
        PanelDataset::new(self.y.clone(), x, 1, None).expect("simulated panel is valid")
    }
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Simulates `y_it = delta0 y_{i,t-1} + beta0 x_it + c_i + v_it` with
/// `x_it = 0.5 + 0.5 x_{i,t-1} + xi_it`, `x_{i,-t0} = 5 + 10 xi`,
/// `v_it = x_it (eps_it - 5)/sqrt(10)` and
/// `c_i = mean_{t=0..T} ln|x_it| + sigma_zeta (zeta_i - 5)/sqrt(10)`,
/// where `xi ~ U(-sqrt 3, sqrt 3)` and `eps, zeta ~ chi2(5)`.
pub fn simulate_paths(cfg: &DgpConfig, rng: &mut Substream) -> SimulatedPaths {
    let (n, t, t0) = (cfg.n_individuals, cfg.n_periods, cfg.t0);
    let len = t0 + t + 1;
    let scale = 10f64.sqrt();
    let mut ys = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    let mut cs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut xi = || SQRT3 * (2.0 * rng.uniform() - 1.0);
        // index k corresponds to period k - t0
        let mut x = Vec::with_capacity(len);
        x.push(5.0 + 10.0 * xi());
        for k in 1..len {
            let next = 0.5 + 0.5 * x[k - 1] + xi();
            x.push(next);
        }
        let c = if cfg.individual_effects {
            let mean_log = x[t0..].iter().map(|v| v.abs().ln()).sum::<f64>() / (t + 1) as f64;
            mean_log + cfg.sigma_zeta * (rng.chi_square(5) - 5.0) / scale
        } else {
            0.0
        };
        let mut y = vec![0.0; len];
        let mut v = vec![0.0; len];
        for k in 1..len {
            v[k] = x[k] * (rng.chi_square(5) - 5.0) / scale;
            y[k] = cfg.delta0 * y[k - 1] + cfg.beta0 * x[k] + c + v[k];
        }
        ys.push(y[t0..].to_vec());
        xs.push(x[t0..].to_vec());
        vs.push(v[t0..].to_vec());
        cs.push(c);
    }
    SimulatedPaths { y: ys, x: xs, c: cs, v: vs }
}

pub fn generate_sample(cfg: &DgpConfig, rng: &mut Substream) -> PanelDataset {
    simulate_paths(cfg, rng).dataset()
}
