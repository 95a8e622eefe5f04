//! Command-line front end for the `predecay` library.
//!
//! Every subcommand is a thin adapter: parse flags, call the library,
//! render one table. Data output goes to `--out` when given and stdout
//! otherwise; the few one-line human summaries (forecast NRMSE, ARCH
//! rejection count) go to stderr so they never contaminate the data
//! stream. Rendering uses the shortest round-trip `f64` formatting, so
//! identical inputs and seeds produce byte-identical files.
//!
//! Exit status encodes the failure class:
//!
//! - `0` — success;
//! - `2` — the request was invalid: bad flags (via clap), a malformed
//!   config or model document, or input data violating the count
//!   contract;
//! - `1` — the computation or I/O failed on an admissible request
//!   (missing file, singular regression, degenerate test, ...).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use predecay::diagnostics::{elm_arch_test, DEFAULT_ALPHA};
use predecay::forecast::{nrmse, poisson_forecast, rolling_forecast};
use predecay::harness::{
    load_series_csv, render_csv, render_json, run_sweep, OutputFormat, SweepConfig,
    ORDINAL_D_RANGE, ORDINAL_TAU_RANGE,
};
use predecay::infotheory::{default_bin_count, mutual_information};
use predecay::ordinal::{select_ordinal_params, weighted_permutation_entropy, OrdinalConfig};
use predecay::sampling::{replicate_thin, SamplingPlan};
use predecay::synth::CoupledSpec;
use predecay::theory::{
    predicted_autocorrelation, predicted_external_covariance, predicted_external_pearson,
    sampled_variance, SampledCovariance,
};
use predecay::{cross_covariance, pearson, CountSeries, Error, Result};

#[derive(Parser)]
#[command(
    name = "predecay",
    version,
    about = "Quantify how random event-level sampling degrades count-series predictability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Thin a count series at one or more sampling rates
    Sample(SampleArgs),
    /// Weighted permutation entropy of a series
    Wpe(WpeArgs),
    /// Autocorrelation of a series at a chosen or dominant lag
    Autocorr(AutocorrArgs),
    /// Binned mutual information between two columns of one file
    Mi(MiArgs),
    /// Closed-form decay curves over a rate grid, from full-resolution moments
    TheoryCurve(TheoryCurveArgs),
    /// Generate a coupled (external, ground) pair plus its replayable model JSON
    Synth(SynthArgs),
    /// Rolling out-of-sample forecast of a count series
    Forecast(ForecastArgs),
    /// Heteroskedasticity LM scan over cumulative lags of a residual column
    Archtest(ArchtestArgs),
    /// Full replicated sampling-rate sweep driven by a JSON config
    Sweep(SweepArgs),
}

/// `--input`/`--column` pair shared by the single-series commands.
#[derive(Args)]
struct InputArgs {
    /// CSV file with a header row
    #[arg(long)]
    input: PathBuf,
    /// Header name of the count column
    #[arg(long)]
    column: String,
}

/// `--format`/`--out` pair shared by every command.
#[derive(Args)]
struct RenderArgs {
    /// Output encoding
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Destination file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Local mirror of [`OutputFormat`] carrying the clap value-enum derive,
/// which the library type deliberately does not.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Sampling rates in [0, 1], comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    /// Thinning replicates per rate
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    /// Base RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    render: RenderArgs,
}

#[derive(Args)]
struct WpeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Embedding order d; grid-searched together with the delay when absent
    #[arg(long, requires = "delay")]
    order: Option<usize>,
    /// Embedding delay tau
    #[arg(long, requires = "order")]
    delay: Option<usize>,
    #[command(flatten)]
    render: RenderArgs,
}

#[derive(Args)]
struct AutocorrArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Lag to evaluate; defaults to the dominant lag over half the series
    #[arg(long)]
    lag: Option<usize>,
    #[command(flatten)]
    render: RenderArgs,
}

#[derive(Args)]
struct MiArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Header name of the second (external) column
    #[arg(long)]
    external: String,
    /// Histogram bins per axis; sqrt-rule (capped at 32) when omitted
    #[arg(long)]
    bins: Option<usize>,
    #[command(flatten)]
    render: RenderArgs,
}

#[derive(Args)]
struct TheoryCurveArgs {
    #[command(flatten)]
    input: InputArgs,
    /// External column; adds covariance and Pearson prediction columns
    #[arg(long)]
    external: Option<String>,
    /// Lag of the autocovariance entering the autocorrelation curve;
    /// defaults to the dominant lag over half the series
    #[arg(long)]
    lag: Option<usize>,
    /// Sampling rates to evaluate, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    #[command(flatten)]
    render: RenderArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Seed drawing the model polynomials
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    /// Seed driving the innovation streams
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Points to keep after burn-in; the spec default when omitted
    #[arg(long)]
    length: Option<usize>,
    /// Where to write the replayable model spec JSON. Defaults to
    /// `<out>.spec.json` next to `--out`; required for CSV output to
    /// stdout, embedded in the document for JSON output.
    #[arg(long)]
    spec_out: Option<PathBuf>,
    #[command(flatten)]
    render: RenderArgs,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Autoregressive order k
    #[arg(long, default_value_t = 5)]
    ar: usize,
    /// Moving-average order l
    #[arg(long, default_value_t = 0)]
    ma: usize,
    /// Training fraction in (0, 1)
    #[arg(long, default_value_t = 0.7)]
    split: f64,
    /// Refit cadence in test steps
    #[arg(long, default_value_t = 1)]
    refit_every: usize,
    /// Use the expanding-mean Poisson baseline instead of an ARMA fit
    #[arg(long, conflicts_with_all = ["ar", "ma", "refit_every"])]
    poisson: bool,
    #[command(flatten)]
    render: RenderArgs,
}

#[derive(Args)]
struct ArchtestArgs {
    /// CSV file with a header row
    #[arg(long)]
    input: PathBuf,
    /// Header name of the (real-valued) residual column
    #[arg(long, default_value = "residual")]
    column: String,
    /// Largest cumulative lag scanned
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
    #[command(flatten)]
    render: RenderArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep-config document
    #[arg(long)]
    config: PathBuf,
    /// Override the config's base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's rate grid, comma separated
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Override the config's replicate count
    #[arg(long)]
    replicates: Option<usize>,
    #[command(flatten)]
    render: RenderArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Sample(args) => cmd_sample(args),
        Command::Wpe(args) => cmd_wpe(args),
        Command::Autocorr(args) => cmd_autocorr(args),
        Command::Mi(args) => cmd_mi(args),
        Command::TheoryCurve(args) => cmd_theory_curve(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Forecast(args) => cmd_forecast(args),
        Command::Archtest(args) => cmd_archtest(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

/// Maps an error to the documented exit status: 2 when the request or its
/// inputs were invalid, 1 when a valid request failed in flight. Sweep-cell
/// wrappers classify by their cause.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::EmptySeries { .. }
        | Error::NegativeValue { .. }
        | Error::NonFiniteValue { .. }
        | Error::LengthMismatch { .. }
        | Error::InsufficientOverlap { .. }
        | Error::InvalidRate { .. }
        | Error::SeriesTooShort { .. }
        | Error::NoFeasibleParams { .. }
        | Error::UnstablePolynomial { .. }
        | Error::InvalidConfig(_)
        | Error::MissingColumn { .. }
        | Error::MalformedRow { .. }
        | Error::Json(_) => 2,
        Error::ConstantSeries { .. }
        | Error::ExcessiveClipping { .. }
        | Error::SingularDesign { .. }
        | Error::DegenerateTest
        | Error::ZeroMeanActuals { .. }
        | Error::Io(_)
        | Error::Csv(_) => 1,
        Error::SweepCell { source, .. } => exit_code(source),
    }
}

/// Writes rendered bytes to `--out` or stdout.
fn write_output(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

/// Serializes a JSON value the way every command emits it: pretty, with a
/// trailing newline.
fn json_bytes(value: &serde_json::Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Reads a real-valued (sign-unconstrained) column, for residual input.
/// Same conventions as the count loader: header names the series, error
/// lines are 1-based counting the header.
fn load_real_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let index = reader
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::MissingColumn {
            column: column.to_string(),
        })?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = record.get(index).ok_or_else(|| Error::MalformedRow {
            line,
            message: format!("row has {} fields, column {} missing", record.len(), index),
        })?;
        let value: f64 = field.parse().map_err(|e| Error::MalformedRow {
            line,
            message: format!("cannot parse `{field}` as a number: {e}"),
        })?;
        if !value.is_finite() {
            return Err(Error::MalformedRow {
                line,
                message: format!("non-finite value {value}"),
            });
        }
        values.push(value);
    }
    Ok(values)
}

// ---------------------------------------------------------------------------
// Subcommand bodies.
// ---------------------------------------------------------------------------

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let series = load_series_csv(&args.input.input, &args.input.column)?;
    let mut thinned: Vec<(f64, u64, CountSeries)> = Vec::new();
    for &rate in &args.rates {
        let plan = SamplingPlan::new(rate, args.replicates, args.seed)?;
        for (replicate, copy) in replicate_thin(&series, &plan)?.into_iter().enumerate() {
            thinned.push((rate, replicate as u64, copy));
        }
    }
    let bytes = match args.render.format {
        Format::Csv => {
            let mut out = String::from("t,rate,replicate,value\n");
            for (rate, replicate, copy) in &thinned {
                for (t, v) in copy.values().iter().enumerate() {
                    out.push_str(&format!("{t},{rate},{replicate},{v}\n"));
                }
            }
            out.into_bytes()
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = thinned
                .iter()
                .flat_map(|(rate, replicate, copy)| {
                    copy.values().iter().enumerate().map(move |(t, v)| {
                        serde_json::json!({
                            "t": t,
                            "rate": rate,
                            "replicate": replicate,
                            "value": v,
                        })
                    })
                })
                .collect();
            json_bytes(&serde_json::json!({
                "label": series.label(),
                "rows": rows,
            }))?
        }
    };
    write_output(&bytes, args.render.out.as_deref())
}

fn cmd_wpe(args: WpeArgs) -> Result<()> {
    let series = load_series_csv(&args.input.input, &args.input.column)?;
    let cfg = match (args.order, args.delay) {
        (Some(order), Some(delay)) => OrdinalConfig::new(order, delay)?,
        (None, None) => select_ordinal_params(&series, ORDINAL_D_RANGE, ORDINAL_TAU_RANGE)?,
        _ => unreachable!("clap enforces order/delay pairing"),
    };
    let value = weighted_permutation_entropy(&series, &cfg)?;
    let bytes = match args.render.format {
        Format::Csv => format!(
            "order,delay,wpe\n{},{},{value}\n",
            cfg.order, cfg.delay
        )
        .into_bytes(),
        Format::Json => json_bytes(&serde_json::json!({
            "order": cfg.order,
            "delay": cfg.delay,
            "wpe": value,
        }))?,
    };
    write_output(&bytes, args.render.out.as_deref())
}

fn cmd_autocorr(args: AutocorrArgs) -> Result<()> {
    let series = load_series_csv(&args.input.input, &args.input.column)?;
    let lag = match args.lag {
        Some(lag) => lag,
        None => series.dominant_lag((series.len() / 2).max(1))?,
    };
    let value = series.autocorrelation(lag)?;
    let bytes = match args.render.format {
        Format::Csv => format!("lag,autocorrelation\n{lag},{value}\n").into_bytes(),
        Format::Json => json_bytes(&serde_json::json!({
            "lag": lag,
            "autocorrelation": value,
        }))?,
    };
    write_output(&bytes, args.render.out.as_deref())
}

fn cmd_mi(args: MiArgs) -> Result<()> {
    let series = load_series_csv(&args.input.input, &args.input.column)?;
    let external = load_series_csv(&args.input.input, &args.external)?;
    let bins = args.bins.unwrap_or_else(|| default_bin_count(series.len()));
    let value = mutual_information(&external, &series, bins)?;
    let bytes = match args.render.format {
        Format::Csv => format!("bins,mi\n{bins},{value}\n").into_bytes(),
        Format::Json => json_bytes(&serde_json::json!({
            "bins": bins,
            "mi": value,
        }))?,
    };
    write_output(&bytes, args.render.out.as_deref())
}

fn cmd_theory_curve(args: TheoryCurveArgs) -> Result<()> {
    let series = load_series_csv(&args.input.input, &args.input.column)?;
    let lag = match args.lag {
        Some(lag) => lag,
        None => series.dominant_lag((series.len() / 2).max(1))?,
    };
    let moments = series.moments();
    let lagged_cov = cross_covariance(&series, &series, lag)?;
    // Full-resolution external moments, computed once; each rate only
    // re-evaluates the closed forms.
    let external = match &args.external {
        Some(column) => {
            let s = load_series_csv(&args.input.input, column)?;
            let cov_xs = cross_covariance(&series, &s, 0)?;
            let rho_xs = pearson(&series, &s)?;
            Some((cov_xs, rho_xs, s.moments().variance.sqrt()))
        }
        None => None,
    };

    struct Row {
        rate: f64,
        variance: f64,
        autocorr: f64,
        external: Option<(f64, f64)>,
    }
    let mut rows = Vec::with_capacity(args.rates.len());
    for &rate in &args.rates {
        let sc = SampledCovariance::new(moments.variance, moments.mean, lagged_cov, rate)?;
        let ext = match external {
            Some((cov_xs, rho_xs, sigma_s)) => Some((
                predicted_external_covariance(cov_xs, rate)?,
                predicted_external_pearson(rho_xs, &sc, sigma_s)?,
            )),
            None => None,
        };
        rows.push(Row {
            rate,
            variance: sampled_variance(&sc),
            autocorr: predicted_autocorrelation(&sc)?,
            external: ext,
        });
    }

    let bytes = match args.render.format {
        Format::Csv => {
            let mut out = String::from("rate,sampled_variance,predicted_autocorrelation");
            if external.is_some() {
                out.push_str(",predicted_external_covariance,predicted_external_pearson");
            }
            out.push('\n');
            for row in &rows {
                out.push_str(&format!("{},{},{}", row.rate, row.variance, row.autocorr));
                if let Some((cov, rho)) = row.external {
                    out.push_str(&format!(",{cov},{rho}"));
                }
                out.push('\n');
            }
            out.into_bytes()
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|row| {
                    let mut obj = serde_json::json!({
                        "rate": row.rate,
                        "sampled_variance": row.variance,
                        "predicted_autocorrelation": row.autocorr,
                    });
                    if let Some((cov, rho)) = row.external {
                        obj["predicted_external_covariance"] = cov.into();
                        obj["predicted_external_pearson"] = rho.into();
                    }
                    obj
                })
                .collect();
            json_bytes(&serde_json::json!({ "lag": lag, "rows": rows }))?
        }
    };
    write_output(&bytes, args.render.out.as_deref())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut spec = CoupledSpec::with_default_orders(args.model_seed, args.seed)?;
    if let Some(length) = args.length {
        spec.length = length;
    }
    let pair = spec.generate()?;
    let spec_json = spec.to_json()?;

    // The model document always lands somewhere replayable: an explicit
    // --spec-out, a sidecar next to --out, or the JSON payload itself.
    let spec_path = args.spec_out.clone().or_else(|| {
        args.render
            .out
            .as_ref()
            .map(|out| out.with_extension("spec.json"))
    });
    if let Some(path) = &spec_path {
        std::fs::write(path, format!("{spec_json}\n"))?;
    } else if args.render.format == Format::Csv {
        return Err(Error::InvalidConfig(
            "CSV output to stdout leaves the model JSON homeless; pass --spec-out or --out".into(),
        ));
    }

    let bytes = match args.render.format {
        Format::Csv => {
            let mut out = String::from("t,external,ground\n");
            for (t, (s, x)) in pair
                .external
                .values()
                .iter()
                .zip(pair.ground.values())
                .enumerate()
            {
                out.push_str(&format!("{t},{s},{x}\n"));
            }
            out.into_bytes()
        }
        Format::Json => json_bytes(&serde_json::json!({
            "spec": spec,
            "external": pair.external.values(),
            "ground": pair.ground.values(),
            "external_offset": pair.external_offset,
            "ground_offset": pair.ground_offset,
            "clipped": pair.clipped,
        }))?,
    };
    write_output(&bytes, args.render.out.as_deref())
}

fn cmd_forecast(args: ForecastArgs) -> Result<()> {
    let series = load_series_csv(&args.input.input, &args.input.column)?;
    let run = if args.poisson {
        poisson_forecast(&series, args.split)?
    } else {
        rolling_forecast(&series, args.split, (args.ar, args.ma), args.refit_every)?
    };
    let score = nrmse(&run)?;
    eprintln!("nrmse = {score}");
    let bytes = match args.render.format {
        Format::Csv => {
            let mut out = Vec::new();
            run.write_csv(&mut out)?;
            out
        }
        Format::Json => json_bytes(&serde_json::json!({
            "nrmse": score,
            "run": run,
        }))?,
    };
    write_output(&bytes, args.render.out.as_deref())
}

fn cmd_archtest(args: ArchtestArgs) -> Result<()> {
    let residuals = load_real_column(&args.input, &args.column)?;
    let result = elm_arch_test(&residuals, args.max_lag)?;
    let rejected = result
        .records
        .iter()
        .filter(|r| r.p_value < DEFAULT_ALPHA)
        .count();
    eprintln!(
        "rejected {rejected}/{} lags at alpha = {DEFAULT_ALPHA}",
        result.records.len()
    );
    let bytes = match args.render.format {
        Format::Csv => {
            let mut out = Vec::new();
            result.write_csv(&mut out)?;
            out
        }
        Format::Json => json_bytes(&serde_json::json!({
            "max_lag": result.max_lag,
            "n_effective": result.n_effective,
            "rejection_fraction": result.rejection_fraction(DEFAULT_ALPHA, 1, result.max_lag),
            "records": result.records,
        }))?,
    };
    write_output(&bytes, args.render.out.as_deref())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config: SweepConfig = serde_json::from_str(&text)?;
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    if let Some(rates) = args.rates {
        config.rates = rates;
    }
    if let Some(replicates) = args.replicates {
        config.replicates = replicates;
    }
    let result = run_sweep(&config)?;
    let bytes = match OutputFormat::from(args.render.format) {
        OutputFormat::Csv => render_csv(&result)?,
        OutputFormat::Json => render_json(&result)?,
    };
    write_output(&bytes, args.render.out.as_deref())
}
