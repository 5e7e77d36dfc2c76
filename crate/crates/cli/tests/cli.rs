use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use dynpanel::montecarlo::{generate_sample, DgpConfig, Substream};
use dynpanel::FitDocument;

fn dynpanel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynpanel")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Long-format panel with `t` running 0..=10 and one regressor column `x1`.
fn write_panel(dir: &Path) -> String {
    let ds = generate_sample(&DgpConfig { n_individuals: 120, ..DgpConfig::default() }, &mut Substream::new(5, 0, 0));
    let mut text = String::from("id,period,y,x1\n");
    for i in 0..ds.n_individuals() {
        for t in 0..=ds.n_periods() {
            let x = if t == 0 { 0.0 } else { ds.x(i, t, 0) };
            writeln!(text, "{i},{t},{},{x}", ds.y(i, t as isize)).unwrap();
        }
    }
    let path = dir.join("panel.csv");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn estimate_writes_a_fit_document() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_panel(dir.path());
    let out = dir.path().join("fit.json");
    let o = dynpanel(&["estimate", "--estimator", "lqml_ecme", "--input", &input, "--x-cols", "x1", "--output", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: FitDocument = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(doc.converged);
    assert_eq!(doc.coefficient_names.len(), doc.gamma.len());
    assert!((doc.gamma[0] - 0.4).abs() < 0.2, "delta {}", doc.gamma[0]);
    let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(raw.get("sigma_a_zeroed").is_some_and(|v| v.is_boolean()));
    assert!(String::from_utf8_lossy(&o.stdout).contains("lqml_ecme"));
}

#[test]
fn missing_column_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_panel(dir.path());
    let o = dynpanel(&["estimate", "--estimator", "dgmm", "--input", &input, "--x-cols", "income"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("income"), "{}", stderr(&o));
}

#[test]
fn structured_differenced_rejects_two_lags() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_panel(dir.path());
    let o = dynpanel(&["estimate", "--estimator", "dqml_x", "--lags", "2", "--input", &input, "--x-cols", "x1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn zero_replications_are_rejected() {
    let o = dynpanel(&["simulate", "--table", "1", "--reps", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("reps"));
}

#[test]
fn simulate_csv_layout_is_deterministic() {
    let args = ["simulate", "--table", "2", "--reps", "2", "--estimators", "dgmm,sgmm", "--format", "csv", "--seed", "9"];
    let a = dynpanel(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "estimator,delta0,sigma_zeta,t0,reps,failures,bias,rmse");
    assert_eq!(lines.len(), 1 + 12 * 2);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(3) == Some("1")));
    let mut with_workers = args.to_vec();
    with_workers.extend(["--workers", "3"]);
    assert_eq!(dynpanel(&with_workers).stdout, a.stdout);
}

#[test]
fn verify_passes_and_detects_perturbation() {
    let o = dynpanel(&["verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("PASS").count(), 5);

    let o = dynpanel(&["verify", "--check", "determinant", "--dims", "2..10"]);
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(o.status.success() && out.lines().count() == 1 && out.contains("determinant"), "{out}");

    let o = dynpanel(&["verify", "--perturb", "1e-3"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
