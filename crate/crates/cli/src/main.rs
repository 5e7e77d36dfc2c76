use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use dynpanel::estimate::{self, EstimateOutput};
use dynpanel::montecarlo::{self, McReport};
use dynpanel::verify::{self, Check, VerifyOptions};
use dynpanel::{CsvSchema, Estimator, FitConfig};

#[derive(Parser)]
#[command(name = "dynpanel", version, about = "QML and GMM estimation of dynamic panel data models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator to a long-format CSV panel.
    Estimate(EstimateArgs),
    /// Run the bias/RMSE simulation grid.
    Simulate(SimulateArgs),
    /// Check the algebraic identities and analytic derivatives.
    Verify(VerifyArgs),
}

#[derive(clap::Args)]
struct EstimateArgs {
    #[arg(long, value_parser = parse_estimator)]
    estimator: Estimator,
    /// Autoregressive order; the first `lags` periods supply pre-sample values.
    #[arg(long, default_value_t = 1)]
    lags: usize,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "id")]
    id_col: String,
    #[arg(long, default_value = "period")]
    period_col: String,
    #[arg(long, default_value = "y")]
    y_col: String,
    /// Comma-separated regressor columns.
    #[arg(long, value_delimiter = ',')]
    x_cols: Vec<String>,
    /// Where to write the JSON fit document (stdout when absent).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, env = "DYNPANEL_TOL", default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, env = "DYNPANEL_MAX_ITER", default_value_t = 5000)]
    max_iter: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Markdown,
    Csv,
    Json,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// 1: stationary start (t0 = 50); 2: recent start (t0 = 1).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    table: u8,
    #[arg(long, default_value_t = 500, conflicts_with = "full")]
    reps: usize,
    /// Use 5000 replications.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    #[arg(long, value_enum, default_value = "markdown")]
    format: Format,
    /// Also write the report to this file.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated estimators (default: the five compared in the tables).
    #[arg(long, value_delimiter = ',', value_parser = parse_estimator)]
    estimators: Vec<Estimator>,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Identities to run (default: all).
    #[arg(long = "check", alias = "verify", value_delimiter = ',', value_parser = parse_check)]
    checks: Vec<Check>,
    /// Dimension range for the determinant identity, e.g. `2..10`.
    #[arg(long, default_value = "2..10", value_parser = parse_range)]
    dims: (usize, usize),
    #[arg(long, default_value_t = 20_240_917)]
    seed: u64,
    /// Relative error injected into the analytic side of every check.
    #[arg(long, default_value_t = 0.0, hide = true)]
    perturb: f64,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    s.parse::<Estimator>().map_err(|e| e.to_string())
}

fn parse_check(s: &str) -> Result<Check, String> {
    Check::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Check::ALL.iter().map(|c| c.name()).collect();
        format!("unknown check `{s}` (expected one of {})", names.join(", "))
    })
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once("..").ok_or("expected LO..HI")?;
    let lo = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let hi = b.trim().trim_start_matches('=').parse::<usize>().map_err(|e| e.to_string())?;
    if lo < 2 || hi < lo {
        return Err("need 2 <= LO <= HI".into());
    }
    Ok((lo, hi))
}

fn cmd_estimate(args: EstimateArgs) -> anyhow::Result<()> {
    if !(args.tol > 0.0) || args.max_iter == 0 {
        bail!(dynpanel::Error::Invalid("tol must be positive and max-iter at least 1".into()));
    }
    let schema = CsvSchema { id: args.id_col, period: args.period_col, y: args.y_col, x: args.x_cols };
    let ds = dynpanel::panel_data::load_csv(&args.input, &schema, args.lags)?;
    let cfg = FitConfig { tol: args.tol, max_iter: args.max_iter, ..FitConfig::default() };
    let out = estimate::run(&ds, args.estimator, &cfg)?;
    let doc = out.document();
    println!("{}", coefficient_table(&out));
    let json = serde_json::to_string_pretty(&doc)?;
    match args.output {
        Some(path) => fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn coefficient_table(out: &EstimateOutput) -> String {
    let doc = out.document();
    let se = doc.standard_errors.clone().unwrap_or_default();
    let mut s = format!("{}\n{:<16} {:>12} {:>12}\n", doc.estimator, "coefficient", "estimate", "std. error");
    for (k, name) in doc.coefficient_names.iter().enumerate() {
        let e = se.get(k).map_or("NA".to_string(), |v| format!("{v:.6}"));
        s.push_str(&format!("{:<16} {:>12.6} {:>12}\n", name, doc.gamma[k], e));
    }
    if let Some(l) = doc.loglik {
        s.push_str(&format!("loglik {:.6}, iterations {}, converged {}", l, doc.iterations, doc.converged));
    } else {
        s.push_str(&format!("instruments {}", doc.instrument_count.unwrap_or(0)));
    }
    if doc.sigma_a_zeroed {
        s.push_str(", effect variance zeroed");
    }
    s
}

fn render(reports: &[McReport], format: Format) -> anyhow::Result<String> {
    Ok(match format {
        Format::Markdown => montecarlo::markdown_table(reports),
        Format::Csv => {
            let mut buf = Vec::new();
            montecarlo::write_csv(&mut buf, reports)?;
            String::from_utf8(buf)?
        }
        Format::Json => serde_json::to_string_pretty(reports)? + "\n",
    })
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let reps = if args.full { 5000 } else { args.reps };
    if reps == 0 {
        bail!(dynpanel::Error::Invalid("--reps must be at least 1".into()));
    }
    if args.workers == 0 {
        bail!(dynpanel::Error::Invalid("--workers must be at least 1".into()));
    }
    let estimators = if args.estimators.is_empty() { montecarlo::TABLE_ESTIMATORS.to_vec() } else { args.estimators };
    let grid = montecarlo::table_grid(args.table, reps, args.seed)?;
    let reports = montecarlo::run_grid(&grid, &estimators, args.workers, false)?;
    let text = render(&reports, args.format)?;
    if let Some(path) = &args.output {
        fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<bool> {
    let opts = VerifyOptions {
        checks: if args.checks.is_empty() { Check::ALL.to_vec() } else { args.checks },
        dims: args.dims.0..=args.dims.1,
        perturb: args.perturb,
        seed: args.seed,
    };
    let results = verify::run_checks(&opts);
    for r in &results {
        println!("{r}");
    }
    Ok(results.iter().all(|r| r.passed()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<dynpanel::Error>() {
        Some(e) if !e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a).map(|_| true),
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            let kind = err.downcast_ref::<dynpanel::Error>().map_or("error", |e| if e.is_validation() { "validation error" } else { "numerical error" });
            eprintln!("{kind}: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
