use dynpanel::gmm::{build_instruments, differenced_y_instrument_count, fit_gmm, fit_system, GmmSpec, GmmSteps, GmmVariant, XTreatment};
use dynpanel::montecarlo::{generate_sample, DgpConfig, Substream};
use dynpanel::PanelDataset;
use nalgebra::{DMatrix, DVector};

/// `y_t = delta y_{t-1} + beta x_t` with no effect and no noise.
fn exact_panel(delta: f64, beta: f64, n: usize, t: usize) -> PanelDataset {
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for i in 0..n {
        let x = DMatrix::from_fn(t, 1, |r, _| (((i * 7 + r * 3) % 11) as f64).sin() + 0.1 * r as f64);
        let mut y = vec![1.0 + (i % 5) as f64 * 0.3];
        for r in 0..t {
            y.push(delta * y[r] + beta * x[(r, 0)]);
        }
        ys.push(y);
        xs.push(x);
    }
    PanelDataset::new(ys, xs, 1, None).unwrap()
}

fn simulated(delta0: f64, rep: u32) -> PanelDataset {
    generate_sample(&DgpConfig { delta0, ..DgpConfig::default() }, &mut Substream::new(11, 3, rep))
}

#[test]
fn exact_fit_recovers_parameters() {
    let ds = exact_panel(0.5, 0.8, 40, 6);
    for variant in [GmmVariant::Differenced, GmmVariant::System] {
        for x_treatment in [XTreatment::StrictlyExogenousGmm, XTreatment::StrictlyExogenousIV] {
            let fit = fit_gmm(&ds, &GmmSpec { x_treatment, ..GmmSpec::new(variant) }).unwrap();
            assert!((fit.coefficients[0] - 0.5).abs() < 1e-9, "{variant:?} {x_treatment:?}");
            assert!((fit.coefficients[1] - 0.8).abs() < 1e-9);
        }
    }
}

#[test]
fn instrument_counts_follow_closed_forms() {
    for t in 3..=12 {
        let ds = exact_panel(0.3, 1.0, 10, t);
        let y = (t - 1) * t / 2;
        assert_eq!(differenced_y_instrument_count(t, None), y);
        let cases = [
            (GmmVariant::Differenced, XTreatment::StrictlyExogenousIV, y + 1),
            (GmmVariant::Differenced, XTreatment::StrictlyExogenousGmm, y + (t - 1) * t),
            (GmmVariant::System, XTreatment::StrictlyExogenousIV, y + 1 + (t - 1) + 2),
            (GmmVariant::System, XTreatment::StrictlyExogenousGmm, y + (t - 1) * t + (t - 1) + 2),
        ];
        for (variant, x_treatment, count) in cases {
            let sys = build_instruments(&ds, &GmmSpec { x_treatment, ..GmmSpec::new(variant) }).unwrap();
            assert_eq!(sys.instrument_count(), count, "T = {t}, {variant:?}, {x_treatment:?}");
        }
    }
}

#[test]
fn one_step_is_invariant_to_instrument_scale() {
    let ds = simulated(0.4, 0);
    let spec = GmmSpec::new(GmmVariant::System);
    let sys = build_instruments(&ds, &spec).unwrap();
    let mut scaled = sys.clone();
    for z in scaled.instruments.iter_mut() {
        *z *= 37.5;
    }
    let (a, b) = (fit_system(&sys, &spec).unwrap(), fit_system(&scaled, &spec).unwrap());
    assert!((a.coefficients - b.coefficients).amax() < 1e-9);
}

#[test]
fn just_identified_gmm_is_iv() {
    let ds = simulated(0.4, 1);
    let spec = GmmSpec { x_treatment: XTreatment::StrictlyExogenousIV, ..GmmSpec::new(GmmVariant::Differenced) };
    let mut sys = build_instruments(&ds, &spec).unwrap();
    // keep y_{t-2} for each equation and the Delta x column: two instruments, two coefficients
    let l = sys.instrument_count();
    let t = ds.n_periods();
    for z in sys.instruments.iter_mut() {
        let mut k = DMatrix::zeros(z.nrows(), 2);
        let mut col = 0;
        for r in 0..z.nrows() {
            k[(r, 0)] = z[(r, col)];
            col += r + 1;
        }
        k.set_column(1, &z.column(l - 1));
        *z = k;
    }
    assert_eq!(differenced_y_instrument_count(t, None), l - 1);
    let fit = fit_system(&sys, &spec).unwrap();
    let mut zx = DMatrix::<f64>::zeros(2, 2);
    let mut zy = DVector::<f64>::zeros(2);
    for i in 0..sys.n_individuals() {
        zx += sys.instruments[i].transpose() * &sys.regressors[i];
        zy += sys.instruments[i].transpose() * &sys.responses[i];
    }
    let iv = zx.lu().solve(&zy).unwrap();
    assert!((fit.coefficients - iv).amax() < 1e-10);
}

#[test]
fn two_step_weight_is_symmetric_psd() {
    let ds = simulated(0.6, 2);
    for variant in [GmmVariant::Differenced, GmmVariant::System] {
        let fit = fit_gmm(&ds, &GmmSpec { steps: GmmSteps::TwoStep, ..GmmSpec::new(variant) }).unwrap();
        let w = &fit.weight;
        assert!((w - w.transpose()).amax() <= 1e-12 * w.amax());
        let eig = w.clone().symmetric_eigen().eigenvalues;
        assert!(eig.min() >= -1e-10 * eig.max());
        assert!(!fit.weight_pinv);
    }
}

#[test]
fn two_periods_leave_no_differenced_equations_with_instruments() {
    let y = vec![vec![0.0, 1.0, 2.0]; 4];
    let x = vec![DMatrix::from_element(2, 1, 1.0); 4];
    let short = PanelDataset::new(y, x, 1, None).unwrap();
    assert!(build_instruments(&short, &GmmSpec::new(GmmVariant::Differenced)).is_err());
}
