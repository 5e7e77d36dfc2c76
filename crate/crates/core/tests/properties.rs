use dynpanel::differenced_qml::{phi_head, phi_matrix, PhiCov};
use dynpanel::levels_qml::{ecme_cm1, ecme_estep, StructuredOmega};
use dynpanel::likelihood::CovarianceModel;
use dynpanel::linalg::{unvech, vech, SymTridiagonal};
use dynpanel::montecarlo::{DgpConfig, McReport};
use dynpanel::panel_data::build_augmented;
use dynpanel::{Estimator, PanelDataset};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn symmetric(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-10.0..10.0f64, n * n).prop_map(move |v| {
        let a = DMatrix::from_vec(n, n, v);
        &a + a.transpose()
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn vech_round_trip(m in (1usize..7).prop_flat_map(symmetric)) {
        let n = m.nrows();
        let v = vech(&m);
        prop_assert_eq!(v.len(), n * (n + 1) / 2);
        prop_assert_eq!(unvech(&v, n), m);
    }

    #[test]
    fn cm1_variances_are_non_negative(
        values in prop::collection::vec(-5.0..5.0f64, 6 * 5),
        gamma in prop::collection::vec(-1.0..1.0f64, 6),
        sigma_a2 in 0.0..3.0f64,
        sigma2 in prop::collection::vec(0.05..3.0f64, 4),
    ) {
        // five individuals, T = 4, p = 1, K = 1
        let y = (0..5).map(|i| values[i * 6..i * 6 + 5].to_vec()).collect();
        let x = (0..5).map(|i| DMatrix::from_fn(4, 1, |r, _| values[i * 6 + 5] + r as f64)).collect();
        let ds = PanelDataset::new(y, x, 1, None).unwrap();
        let d = build_augmented(&ds);
        let gamma = DVector::from_fn(d.stack.n_coef(), |r, _| gamma[r % 6]);
        let omega = StructuredOmega { sigma_a2, sigma2 };
        let (a, v) = ecme_estep(&d, &gamma, &omega).unwrap();
        prop_assert!(v >= 0.0);
        let next = ecme_cm1(&d, &gamma, &a, v);
        prop_assert!(next.sigma_a2 >= 0.0);
        prop_assert!(next.sigma2.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn phi_determinant_identity(dim in 2usize..12, varpi in -4.0..4.0f64, sigma2 in 0.1..5.0f64) {
        let phi = phi_head(varpi, dim);
        let dense = (phi_matrix(varpi, dim) * sigma2).determinant();
        let closed = sigma2.powi(dim as i32) * (1.0 + dim as f64 * (phi - 1.0));
        prop_assert!(rel(dense, closed) <= 1e-9, "{} vs {}", dense, closed);
    }

    #[test]
    fn phi_factor_matches_dense(dim in 2usize..10, varpi in -4.0..4.0f64, sigma2 in 0.1..5.0f64) {
        let cov = PhiCov { sigma2, varpi, dim };
        let f = cov.factor().unwrap();
        let dense = cov.dense();
        prop_assert!(rel(f.logdet, dense.determinant().ln()) <= 1e-9);
        let err = (&f.inverse * &dense - DMatrix::identity(dim, dim)).amax();
        prop_assert!(err <= 1e-8, "inverse error {}", err);
    }

    #[test]
    fn structured_factor_matches_dense(sigma_a2 in 0.0..5.0f64, sigma2 in prop::collection::vec(0.05..5.0f64, 1..10)) {
        let om = StructuredOmega { sigma_a2, sigma2 };
        let f = om.factor().unwrap();
        let dense = om.dense();
        let n = dense.nrows();
        let (chol_inv, chol_logdet) = {
            let c = dense.clone().cholesky().unwrap();
            (c.inverse(), 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
        };
        prop_assert!((f.logdet - chol_logdet).abs() <= 1e-10 * (1.0 + chol_logdet.abs()));
        prop_assert!((&f.inverse - &chol_inv).amax() <= 1e-9 * chol_inv.amax().max(1.0));
        prop_assert_eq!(f.inverse.nrows(), n);
    }

    #[test]
    fn rmse_decomposes_into_bias_and_spread(delta0 in -0.9..0.9f64, estimates in prop::collection::vec(-2.0..2.0f64, 1..60)) {
        let cfg = DgpConfig { delta0, ..DgpConfig::default() };
        let r = McReport::from_estimates(Estimator::LqmlEcme, &cfg, &estimates, 0, false);
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        let var = estimates.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((r.rmse.powi(2) - (r.bias.powi(2) + var)).abs() <= 1e-12 * (1.0 + r.rmse.powi(2)));
        prop_assert!(r.rmse >= r.bias.abs() - 1e-15);
    }

    #[test]
    fn tridiagonal_ldl_solves_and_reports_log_determinant(
        n in 1usize..12,
        seed in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -3.0..3.0f64), 12),
    ) {
        // diagonally dominant, hence positive definite
        let off: Vec<f64> = seed[..n.saturating_sub(1)].iter().map(|s| s.0).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.1 + seed[i].1.abs()).collect();
        let m = SymTridiagonal { diag, off };
        let ldl = m.ldl().unwrap();
        let dense = m.to_dense();
        prop_assert!(rel(ldl.logdet(), dense.determinant().ln()) <= 1e-10);
        let b: Vec<f64> = seed[..n].iter().map(|s| s.2).collect();
        let mut x = b.clone();
        ldl.solve_in_place(&mut x);
        let back = &dense * DVector::from_vec(x);
        for (lhs, rhs) in back.iter().zip(&b) {
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
        prop_assert!((ldl.inverse() * &dense - DMatrix::identity(n, n)).amax() <= 1e-12);
    }
}

#[test]
fn indefinite_tridiagonal_is_rejected() {
    let m = SymTridiagonal { diag: vec![1.0, 1.0], off: vec![2.0] };
    assert!(m.ldl().is_none());
}
