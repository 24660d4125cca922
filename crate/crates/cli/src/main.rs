//! Command-line interface: ingestion, fitting, forecasting, validation,
//! simulation and experiment reproduction for autoregressive transport models.

use atm_core::io::{read_long_csv, read_quantile_matrix, write_quantile_matrix, FitReport, ModelReport};
use atm_core::model::{
    build_transport_series, evaluate_rolling, fit_atm1, fit_atmp, fit_cat, fit_coefficients,
    forecast_distribution, select_order, AtmVariant, FitConfig,
};
use atm_core::sim::{
    gaussian_shrinking_series, run_monte_carlo, simulate_atm, simulate_sin_series, NoiseFormula,
    SimConfig, SinExperiment, SinSimConfig, SplineNoiseModel, TransportExperiment,
};
use atm_core::{
    transports_as_distributions, wasserstein_distance, AtmError, Distribution, Grid, ProbGrid,
    SampleBatch,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "atm", about = "Autoregressive transport models for distributional time series")]
struct Cli {
    /// Number of grid nodes on the support interval.
    #[arg(long, global = true, default_value_t = 101)]
    grid_size: usize,
    /// Number of probability levels for quantile tabulations.
    #[arg(long, global = true, default_value_t = 201)]
    prob_size: usize,
    /// Support interval lower endpoint.
    #[arg(long, global = true, default_value_t = 0.0)]
    support_lo: f64,
    /// Support interval upper endpoint.
    #[arg(long, global = true, default_value_t = 1.0)]
    support_hi: f64,
    #[arg(long, global = true, env = "ATM_SEED", default_value_t = 0)]
    seed: u64,
    /// Emit errors as JSON on stderr in addition to plain text.
    #[arg(long, global = true)]
    json_errors: bool,
    /// Cap the worker-thread count for Monte Carlo subcommands.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Mean,
    Difference,
}

impl From<VariantArg> for AtmVariant {
    fn from(v: VariantArg) -> AtmVariant {
        match v {
            VariantArg::Mean => AtmVariant::MeanBased,
            VariantArg::Difference => AtmVariant::DifferenceBased,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    /// Long CSV: time,value rows of raw observations.
    Long,
    /// Quantile matrix CSV: probability level column plus one column per time.
    Quantile,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Atm,
    Cat,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Table,
    Rate,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulaArg {
    Corrected,
    Printed,
}

impl From<FormulaArg> for NoiseFormula {
    fn from(f: FormulaArg) -> NoiseFormula {
        match f {
            FormulaArg::Corrected => NoiseFormula::Corrected,
            FormulaArg::Printed => NoiseFormula::Printed,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Quantile)]
    format: FormatArg,
    #[arg(long, value_enum, default_value_t = VariantArg::Difference)]
    variant: VariantArg,
    #[arg(long, value_enum, default_value_t = ModelArg::Atm)]
    model: ModelArg,
    /// Autoregressive order.
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Output path for the JSON fit report; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Comma-separated autoregressive coefficients, lag 1 first.
    #[arg(long, default_value = "0.5")]
    alphas: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    burn_in: usize,
    /// Simulate the sin-series distributions instead of the transport recursion.
    #[arg(long)]
    sin: bool,
    #[arg(long, value_enum, default_value_t = NoiseArg::Table)]
    noise: NoiseArg,
    #[arg(long, value_enum, default_value_t = FormulaArg::Corrected)]
    formula: FormulaArg,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Difference)]
    variant: VariantArg,
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Difference)]
    variant: VariantArg,
    /// Comma-separated candidate orders.
    #[arg(long, default_value = "1,2,3,4,5")]
    candidates: String,
    /// Number of rolling windows in the presample.
    #[arg(long, default_value_t = 5)]
    presample_windows: usize,
    /// Rolling-window length for order selection.
    #[arg(long)]
    window: usize,
    /// Window length for the rolling forecast-loss evaluation.
    #[arg(long)]
    eval_window: Option<usize>,
}

#[derive(Args)]
struct DistanceArgs {
    first: PathBuf,
    second: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    /// Forecast-accuracy table on simulated transport series.
    Table1,
    /// Estimation-error decay of the order-1 coefficient with series length.
    Rate,
    /// Shrinking-variance Gaussian demonstration.
    Trend,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, value_enum)]
    experiment: ExperimentArg,
    #[arg(long, default_value_t = 1000)]
    replications: usize,
    #[arg(long, value_enum, default_value_t = FormulaArg::Corrected)]
    formula: FormulaArg,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a distribution series.
    Fit(FitArgs),
    /// Simulate a synthetic series and write it as a quantile matrix.
    Simulate(SimulateArgs),
    /// One-step-ahead distribution forecast.
    Forecast(ForecastArgs),
    /// Rolling-window order selection and forecast-loss evaluation.
    Validate(ValidateArgs),
    /// Wasserstein distance between the first distributions of two files.
    Distance(DistanceArgs),
    /// Re-run a packaged simulation experiment and write its summary table.
    Reproduce(ReproduceArgs),
}

fn parse_floats(text: &str) -> Result<Vec<f64>, AtmError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| AtmError::Format(format!("bad number {:?}", s.trim())))
        })
        .collect()
}

fn parse_orders(text: &str) -> Result<Vec<usize>, AtmError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| AtmError::Format(format!("bad order {:?}", s.trim())))
        })
        .collect()
}

struct Ctx {
    grid: Grid,
    prob: ProbGrid,
    seed: u64,
}

fn read_distributions(
    path: &Path,
    format: FormatArg,
    ctx: &Ctx,
) -> Result<Vec<Distribution>, AtmError> {
    let file = File::open(path)?;
    match format {
        FormatArg::Quantile => read_quantile_matrix(file, ctx.grid),
        FormatArg::Long => {
            let batches: Vec<SampleBatch> = read_long_csv(file)?;
            batches
                .iter()
                .map(|b| Distribution::from_samples(b, ctx.grid, ctx.prob.clone()))
                .collect()
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), AtmError> {
    match path {
        Some(p) => {
            let mut f = File::create(p)?;
            f.write_all(text.as_bytes())?;
            f.write_all(b"\n")?;
            Ok(())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_fit(args: &FitArgs, ctx: &Ctx) -> Result<(), AtmError> {
    let dists = read_distributions(&args.input, args.format, ctx)?;
    let variant: AtmVariant = args.variant.into();
    let transports = build_transport_series(variant, &dists)?;
    let config = FitConfig {
        eta: args.eta,
        max_iter: args.max_iter,
        seed: ctx.seed,
        ..FitConfig::default()
    };
    let report = match args.model {
        ModelArg::Cat => FitReport::new(variant, ModelReport::Cat(fit_cat(&transports)?), None),
        ModelArg::Atm if args.order == 1 => {
            FitReport::new(variant, ModelReport::Atm1(fit_atm1(&transports)?), None)
        }
        ModelArg::Atm => {
            let fit = fit_atmp(&transports, args.order, &config)?;
            FitReport::new(variant, ModelReport::AtmP(fit), Some(config))
        }
    };
    write_output(args.output.as_deref(), &report.to_json()?)
}

fn cmd_simulate(args: &SimulateArgs, ctx: &Ctx) -> Result<(), AtmError> {
    if args.n == 0 {
        return Err(AtmError::Parameter("series length n must be positive".into()));
    }
    let alphas = parse_floats(&args.alphas)?;
    let dists = if args.sin {
        if alphas.len() > 4 {
            return Err(AtmError::Parameter("at most 4 coefficients".into()));
        }
        let mut padded = [0.0; 4];
        padded[..alphas.len()].copy_from_slice(&alphas);
        let mut config = SinSimConfig::new(padded, args.n, ctx.seed, ctx.grid, ctx.prob.clone());
        config.burn_in = args.burn_in;
        simulate_sin_series(&config)?
    } else {
        let formula = args.formula.into();
        let noise = match args.noise {
            NoiseArg::Table => SplineNoiseModel::table_spline(ctx.grid, formula)?,
            NoiseArg::Rate => SplineNoiseModel::rate_spline(ctx.grid, formula)?,
        };
        let mut config = SimConfig::new(alphas, args.n, ctx.seed, noise);
        config.burn_in = args.burn_in;
        let transports = simulate_atm(&config)?;
        transports_as_distributions(&transports, &ctx.prob)?
    };
    let file = File::create(&args.output)?;
    write_quantile_matrix(file, &dists)
}

fn cmd_forecast(args: &ForecastArgs, ctx: &Ctx) -> Result<(), AtmError> {
    let dists = read_distributions(&args.input, FormatArg::Quantile, ctx)?;
    let variant: AtmVariant = args.variant.into();
    let transports = build_transport_series(variant, &dists)?;
    let config = FitConfig { eta: args.eta, seed: ctx.seed, ..FitConfig::default() };
    let alphas = fit_coefficients(&transports, args.order, &config)?;
    let forecast = forecast_distribution(variant, &alphas, &dists, &transports)?;
    let file = File::create(&args.output)?;
    write_quantile_matrix(file, std::slice::from_ref(&forecast))
}

fn cmd_validate(args: &ValidateArgs, ctx: &Ctx) -> Result<(), AtmError> {
    let dists = read_distributions(&args.input, FormatArg::Quantile, ctx)?;
    let variant: AtmVariant = args.variant.into();
    let candidates = parse_orders(&args.candidates)?;
    let config = FitConfig { eta: 0.2, max_iter: 100, tol: 1e-5, seed: ctx.seed, ..FitConfig::default() };
    let order = select_order(
        variant,
        &dists,
        args.presample_windows,
        args.window,
        &candidates,
        &config,
    )?;
    let eval_window = args.eval_window.unwrap_or(args.window);
    let loss = evaluate_rolling(variant, &dists, eval_window, order, &config)?;
    println!(
        "{}",
        serde_json::json!({ "selected_order": order, "rolling_loss": loss })
    );
    Ok(())
}

fn cmd_distance(args: &DistanceArgs, ctx: &Ctx) -> Result<(), AtmError> {
    let a = read_distributions(&args.first, FormatArg::Quantile, ctx)?;
    let b = read_distributions(&args.second, FormatArg::Quantile, ctx)?;
    let d = wasserstein_distance(&a[0], &b[0])?;
    println!("{d}");
    Ok(())
}

fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), AtmError> {
    let mut wtr = csv::Writer::from_writer(File::create(path)?);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn cmd_reproduce(args: &ReproduceArgs, ctx: &Ctx) -> Result<(), AtmError> {
    if args.replications == 0 {
        return Err(AtmError::Parameter("replication count must be positive".into()));
    }
    match args.experiment {
        ExperimentArg::Table1 => {
            let mut rows = Vec::new();
            for alphas in [[0.5, 0.0, 0.0, 0.0], [0.2, -0.5, 0.1, -0.3]] {
                let noise = SplineNoiseModel::table_spline(ctx.grid, args.formula.into())?;
                let exp = TransportExperiment::table1(alphas, noise, ctx.prob.clone());
                let s = run_monte_carlo(args.replications, ctx.seed, |seed| exp.replicate(seed));
                rows.push(vec![
                    format!("{:?}", alphas),
                    "atm-mean".into(),
                    format!("{}", s.mean),
                    format!("{}", s.std_error),
                    format!("{}", s.count),
                    format!("{}", s.failures),
                ]);
            }
            let sin = SinExperiment {
                alphas: [0.5, 0.0, 0.0, 0.0],
                corrected_lags: false,
                series_len: 101,
                grid: ctx.grid,
                prob: ctx.prob.clone(),
            };
            let s = run_monte_carlo(args.replications, ctx.seed, |seed| sin.replicate(seed));
            rows.push(vec![
                "sin(0.5,0,0,0)".into(),
                "atm-mean-1".into(),
                format!("{}", s.mean),
                format!("{}", s.std_error),
                format!("{}", s.count),
                format!("{}", s.failures),
            ]);
            write_csv_rows(
                &args.output,
                &["config", "model", "mean_error", "std_error", "count", "failures"],
                &rows,
            )
        }
        ExperimentArg::Rate => {
            let mut rows = Vec::new();
            for &n in &[100usize, 200, 400, 800, 1600, 3200] {
                let noise = SplineNoiseModel::rate_spline(ctx.grid, args.formula.into())?;
                let s = run_monte_carlo(args.replications, ctx.seed ^ n as u64, |seed| {
                    let config = SimConfig::new(vec![0.5], n, seed, noise.clone());
                    let series = simulate_atm(&config)?;
                    Ok((fit_atm1(&series)?.alpha - 0.5).abs())
                });
                rows.push(vec![
                    format!("{n}"),
                    format!("{}", s.mean),
                    format!("{}", s.std_error),
                    format!("{}", s.failures),
                ]);
            }
            write_csv_rows(&args.output, &["n", "mean_abs_error", "std_error", "failures"], &rows)
        }
        ExperimentArg::Trend => {
            let grid = Grid::new(-10.0, 10.0, ctx.grid.len())?;
            let dists = gaussian_shrinking_series(grid, &ctx.prob)?;
            let mut rows = vec![vec![
                "observed-last".into(),
                format!("{}", dists.last().unwrap().variance()),
            ]];
            for (label, variant) in [
                ("mean-based", AtmVariant::MeanBased),
                ("difference-based", AtmVariant::DifferenceBased),
            ] {
                let transports = build_transport_series(variant, &dists)?;
                let fit = fit_atm1(&transports)?;
                let forecast = forecast_distribution(variant, &[fit.alpha], &dists, &transports)?;
                rows.push(vec![label.into(), format!("{}", forecast.variance())]);
            }
            write_csv_rows(&args.output, &["forecast", "variance"], &rows)
        }
    }
}

fn error_exit_code(err: &AtmError) -> i32 {
    match err {
        AtmError::Format(_) | AtmError::Io(_) | AtmError::Csv(_) | AtmError::Parameter(_) => 1,
        _ => 2,
    }
}

fn error_kind(err: &AtmError) -> &'static str {
    match err {
        AtmError::Format(_) | AtmError::Csv(_) => "format",
        AtmError::Io(_) => "io",
        AtmError::Parameter(_) => "usage",
        AtmError::Domain { .. } => "domain",
        AtmError::GridMismatch(_) => "grid-mismatch",
        AtmError::Degenerate(_) => "degenerate",
        AtmError::NonIdentifiable(_) => "non-identifiable",
        AtmError::Diverged(_) => "diverged",
        AtmError::InsufficientData(_) => "insufficient-data",
    }
}

fn run(cli: &Cli) -> Result<(), AtmError> {
    let grid = Grid::new(cli.support_lo, cli.support_hi, cli.grid_size)?;
    let prob = ProbGrid::uniform(cli.prob_size)?;
    if let Some(threads) = cli.threads {
        // best effort: a second initialization in the same process is ignored
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let ctx = Ctx { grid, prob, seed: cli.seed };
    match &cli.command {
        Command::Fit(args) => cmd_fit(args, &ctx),
        Command::Simulate(args) => cmd_simulate(args, &ctx),
        Command::Forecast(args) => cmd_forecast(args, &ctx),
        Command::Validate(args) => cmd_validate(args, &ctx),
        Command::Distance(args) => cmd_distance(args, &ctx),
        Command::Reproduce(args) => cmd_reproduce(args, &ctx),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        if cli.json_errors {
            eprintln!(
                "{}",
                serde_json::json!({ "error": err.to_string(), "kind": error_kind(&err) })
            );
        }
        std::process::exit(error_exit_code(&err));
    }
}
