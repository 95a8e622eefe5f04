//! Experiment orchestration: sampling-rate sweeps over ingested or
//! synthetic count series.
//!
//! A sweep fixes everything estimable from the full-resolution series —
//! dominant lag, ordinal parameters, moment summaries — then thins each
//! analysis window at every requested rate, recomputes the requested
//! metrics per replicate, and attaches the closed-form predictions and
//! the ratio to the full-resolution value. Output is one long-format
//! table per run, ready for any external plotting tool.
//!
//! Determinism contract: a sweep is a pure function of (input files,
//! config, base seed). Every random draw — window starts and per-cell
//! thinning — derives its seed from `stable_mix` of the cell coordinates,
//! so cells could be evaluated in any order (or in parallel) without
//! changing a byte of the output; records are canonically sorted before
//! emission either way.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{elm_arch_test, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::forecast::{nrmse, rolling_forecast, ForecastRun};
use crate::infotheory::{default_bin_count, mutual_information};
use crate::ordinal::{select_ordinal_params, weighted_permutation_entropy, OrdinalConfig};
use crate::sampling::{replicate_thin, stable_mix, SamplingPlan};
use crate::series::{cross_covariance, pearson, CountSeries};
use crate::synth::CoupledSpec;
use crate::theory::{
    predicted_autocorrelation, predicted_external_covariance, predicted_external_pearson,
    SampledCovariance,
};

/// One year of weekly observations — the default analysis window.
pub const DEFAULT_WINDOW_LENGTH: usize = 52;

/// Ratios to a full-resolution baseline smaller than this (in absolute
/// value) are reported as null rather than as a near-infinity.
pub const RATIO_BASELINE_EPS: f64 = 1e-12;

/// Grid bounds for the per-window ordinal parameter search; shared with
/// the CLI so a standalone `wpe` run and a sweep search the same space.
pub const ORDINAL_D_RANGE: std::ops::RangeInclusive<usize> = 2..=5;
pub const ORDINAL_TAU_RANGE: std::ops::RangeInclusive<usize> = 1..=7;

/// Forecast settings used by the `nrmse` and `arch` metrics: an AR(5)
/// refit at every test step on a 70/30 split, with the LM test scanned to
/// lag 20 on the resulting residuals.
const SWEEP_AR_ORDER: (usize, usize) = (5, 0);
const SWEEP_TRAIN_FRACTION: f64 = 0.7;
const SWEEP_ARCH_MAX_LAG: usize = 20;

/// `stable_mix` rate tags reserved for seed derivation. Real cells only
/// ever mix rates in (0, 1], so these cannot collide with a thinning
/// stream.
const WINDOW_SEED_TAG: f64 = -1.0;
const SELECTION_SEED_TAG: f64 = -2.0;

/// The metrics a sweep can compute per (window, rate, replicate) cell.
///
/// Enum order is the canonical output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Plug-in autocorrelation at the window's dominant lag: the lagged
    /// covariance over the window variance, the exact functional the
    /// theoretical column predicts.
    Autocorr,
    /// Weighted permutation entropy at the window's selected `(d, tau)`.
    Wpe,
    /// Mutual information with the external series, square-root binning.
    Mi,
    /// Lag-0 covariance with the external series.
    CovExternal,
    /// Pearson correlation with the external series.
    PearsonExternal,
    /// Normalized RMSE of the rolling autoregressive forecast.
    Nrmse,
    /// Fraction of LM-test lags `1..=20` rejecting homoskedasticity of the
    /// rolling-forecast residuals at the 5% level.
    Arch,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Autocorr,
        Metric::Wpe,
        Metric::Mi,
        Metric::CovExternal,
        Metric::PearsonExternal,
        Metric::Nrmse,
        Metric::Arch,
    ];

    /// The snake_case name used in output tables and on the CLI.
    pub fn name(self) -> &'static str {
        match self {
            Metric::Autocorr => "autocorr",
            Metric::Wpe => "wpe",
            Metric::Mi => "mi",
            Metric::CovExternal => "cov_external",
            Metric::PearsonExternal => "pearson_external",
            Metric::Nrmse => "nrmse",
            Metric::Arch => "arch",
        }
    }

    /// Whether the metric needs a second (external) series.
    pub fn needs_external(self) -> bool {
        matches!(
            self,
            Metric::Mi | Metric::CovExternal | Metric::PearsonExternal
        )
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric `{s}`")))
    }
}

/// Where the swept series comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepSource {
    /// A CSV file on disk; `column` selects the count series.
    Csv { path: PathBuf, column: String },
    /// An inline generator spec; the generated pair supplies both the
    /// ground-truth series and its external companion.
    Synthetic { spec: CoupledSpec },
}

/// Moving-window selection: `count` windows of `length` points, starts
/// drawn uniformly (overlap allowed) from the sweep seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowConfig {
    #[serde(default = "default_window_length")]
    pub length: usize,
    pub count: usize,
}

fn default_window_length() -> usize {
    DEFAULT_WINDOW_LENGTH
}

/// Full description of one sweep run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub source: SweepSource,
    /// Sampling rates, strictly ascending, each in (0, 1].
    pub rates: Vec<f64>,
    /// Thinning replicates per (window, rate); at least 1.
    pub replicates: usize,
    pub base_seed: u64,
    /// Metrics to compute; order is irrelevant (output is canonical).
    pub metrics: Vec<Metric>,
    /// CSV column holding the external series, when the source is a file.
    #[serde(default)]
    pub external: Option<String>,
    /// Enables the moving-window protocol; absent means one window
    /// spanning the whole series.
    #[serde(default)]
    pub window: Option<WindowConfig>,
}

/// One output row: the empirical metric for a cell, the closed-form
/// prediction where one exists (always evaluated from full-resolution
/// moments), and the ratio to the full-resolution value of the same
/// metric (null when that baseline is within [`RATIO_BASELINE_EPS`] of
/// zero).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub label: String,
    pub window: usize,
    pub rate: f64,
    pub replicate: u64,
    pub metric: Metric,
    pub empirical: f64,
    pub theoretical: Option<f64>,
    pub relative: Option<f64>,
}

/// The long-format result table. Every requested (rate, replicate,
/// metric) triple appears exactly once per window, in canonical order:
/// label, window, rate, replicate, metric.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
}

/// Output encodings for [`emit_results`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidConfig(format!(
                "unknown output format `{other}` (expected csv or json)"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion.
// ---------------------------------------------------------------------------

/// Reads the named column of a headered CSV file as a count series. Rows
/// keep file order; the series label is the column name. Error messages
/// carry 1-based line numbers that count the header as line 1.
pub fn load_series_csv(path: impl AsRef<Path>, column: &str) -> Result<CountSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
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
            message: format!(
                "row has {} fields but column `{column}` is field {}",
                record.len(),
                index + 1
            ),
        })?;
        let value: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("cannot parse `{field}` as a number"),
        })?;
        if !value.is_finite() {
            return Err(Error::MalformedRow {
                line,
                message: format!("non-finite value `{field}`"),
            });
        }
        if value < 0.0 {
            return Err(Error::MalformedRow {
                line,
                message: format!("negative count {value}"),
            });
        }
        values.push(value);
    }
    CountSeries::new(column, values)
}

// ---------------------------------------------------------------------------
// Sweep execution.
// ---------------------------------------------------------------------------

/// Per-window quantities fixed from the full-resolution series before any
/// thinning, mirroring the protocol of keeping the dominant lag and the
/// ordinal parameters from the ground-truth signal.
struct WindowContext<'a> {
    variance: f64,
    mean: f64,
    /// Dominant lag and the lagged covariance there; present only when
    /// the autocorrelation metric is requested.
    lag: Option<usize>,
    lagged_cov: Option<f64>,
    ordinal: Option<OrdinalConfig>,
    external: Option<&'a CountSeries>,
    rho_xs: Option<f64>,
    sigma_s: Option<f64>,
    cov_xs: Option<f64>,
}

/// Runs the full sweep protocol described by `config`. Fully
/// deterministic given the config and its base seed; any cell failure is
/// reported with its (window, rate, replicate) coordinates.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    validate_config(config)?;
    let (ground, external) = load_source(config)?;
    let windows = select_windows(config, ground.len())?;
    let metrics = canonical_metrics(&config.metrics);

    let mut records = Vec::new();
    for (window_id, &(start, length)) in windows.iter().enumerate() {
        let x_win = slice_series(&ground, start, length)?;
        let s_win = match &external {
            Some(s) => Some(slice_series(s, start, length)?),
            None => None,
        };
        sweep_window(config, window_id, &x_win, s_win.as_ref(), &metrics, &mut records)?;
    }
    records.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then(a.window.cmp(&b.window))
            .then(a.rate.total_cmp(&b.rate))
            .then(a.replicate.cmp(&b.replicate))
            .then(a.metric.cmp(&b.metric))
    });
    debug_assert_eq!(
        records.len(),
        windows.len() * config.rates.len() * config.replicates * metrics.len()
    );
    Ok(SweepResult { records })
}

fn validate_config(config: &SweepConfig) -> Result<()> {
    if config.rates.is_empty() {
        return Err(Error::InvalidConfig("rates list is empty".into()));
    }
    for rate in &config.rates {
        if !(*rate > 0.0 && *rate <= 1.0) {
            return Err(Error::InvalidRate { rate: *rate });
        }
    }
    if !config.rates.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidConfig(
            "rates must be strictly ascending".into(),
        ));
    }
    if config.replicates == 0 {
        return Err(Error::InvalidConfig("replicates must be >= 1".into()));
    }
    if config.metrics.is_empty() {
        return Err(Error::InvalidConfig("metrics list is empty".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for m in &config.metrics {
        if !seen.insert(*m) {
            return Err(Error::InvalidConfig(format!(
                "metric `{}` listed twice",
                m.name()
            )));
        }
    }
    let has_external = match &config.source {
        SweepSource::Synthetic { .. } => {
            if config.external.is_some() {
                return Err(Error::InvalidConfig(
                    "synthetic sources carry their own external series; \
                     `external` only applies to CSV sources"
                        .into(),
                ));
            }
            true
        }
        SweepSource::Csv { .. } => config.external.is_some(),
    };
    if !has_external {
        if let Some(m) = config.metrics.iter().find(|m| m.needs_external()) {
            return Err(Error::InvalidConfig(format!(
                "metric `{}` needs an external series",
                m.name()
            )));
        }
    }
    if let Some(w) = &config.window {
        if w.length < 2 {
            return Err(Error::InvalidConfig(format!(
                "window length {} too small",
                w.length
            )));
        }
        if w.count == 0 {
            return Err(Error::InvalidConfig("window count must be >= 1".into()));
        }
    }
    Ok(())
}

/// Loads the ground series and, when configured, the external series.
fn load_source(config: &SweepConfig) -> Result<(CountSeries, Option<CountSeries>)> {
    match &config.source {
        SweepSource::Csv { path, column } => {
            let ground = load_series_csv(path, column)?;
            let external = match &config.external {
                Some(col) => Some(load_series_csv(path, col)?),
                None => None,
            };
            Ok((ground, external))
        }
        SweepSource::Synthetic { spec } => {
            let pair = spec.generate()?;
            Ok((pair.ground, Some(pair.external)))
        }
    }
}

/// Chooses analysis windows as `(start, length)` pairs. Without window
/// config the whole series is window 0; otherwise starts are uniform
/// draws (overlap allowed) from a dedicated stream, reproducible from the
/// base seed.
fn select_windows(config: &SweepConfig, n: usize) -> Result<Vec<(usize, usize)>> {
    match &config.window {
        None => Ok(vec![(0, n)]),
        Some(w) => {
            if w.length > n {
                return Err(Error::InvalidConfig(format!(
                    "window length {} exceeds series length {n}",
                    w.length
                )));
            }
            let mut rng =
                ChaCha8Rng::seed_from_u64(stable_mix(config.base_seed, 0, SELECTION_SEED_TAG));
            Ok((0..w.count)
                .map(|_| (rng.random_range(0..=n - w.length), w.length))
                .collect())
        }
    }
}

fn slice_series(series: &CountSeries, start: usize, length: usize) -> Result<CountSeries> {
    CountSeries::new(series.label(), series.values()[start..start + length].to_vec())
}

/// Metrics restricted to the requested set, in canonical enum order.
fn canonical_metrics(requested: &[Metric]) -> Vec<Metric> {
    Metric::ALL
        .into_iter()
        .filter(|m| requested.contains(m))
        .collect()
}

fn cell_error(window: usize, rate: f64, replicate: u64) -> impl FnOnce(Error) -> Error {
    move |source| Error::SweepCell {
        window,
        rate,
        replicate,
        source: Box::new(source),
    }
}

fn sweep_window(
    config: &SweepConfig,
    window_id: usize,
    x_win: &CountSeries,
    s_win: Option<&CountSeries>,
    metrics: &[Metric],
    records: &mut Vec<SweepRecord>,
) -> Result<()> {
    // Baseline stage: everything fixed from the unsampled window. Failures
    // here are reported as the (rate 1, replicate 0) cell.
    let baseline_tag = |e| cell_error(window_id, 1.0, 0)(e);
    let ctx = build_context(x_win, s_win, metrics).map_err(baseline_tag)?;
    let baseline = cell_metrics(x_win, &ctx, metrics).map_err(baseline_tag)?;

    let window_seed = stable_mix(config.base_seed, window_id as u64, WINDOW_SEED_TAG);
    for &rate in &config.rates {
        let plan = SamplingPlan::new(rate, config.replicates, window_seed)
            .map_err(cell_error(window_id, rate, 0))?;
        let thinned = replicate_thin(x_win, &plan).map_err(cell_error(window_id, rate, 0))?;
        for (replicate, y) in thinned.iter().enumerate() {
            let replicate = replicate as u64;
            let tag = |e| cell_error(window_id, rate, replicate)(e);
            let values = cell_metrics(y, &ctx, metrics).map_err(tag)?;
            for ((metric, empirical), (_, base)) in values.into_iter().zip(&baseline) {
                let theoretical = theory_value(metric, &ctx, rate).map_err(tag)?;
                records.push(SweepRecord {
                    label: x_win.label().to_string(),
                    window: window_id,
                    rate,
                    replicate,
                    metric,
                    empirical,
                    theoretical,
                    relative: relative_to(*base, empirical),
                });
            }
        }
    }
    Ok(())
}

/// Ratio guard: near-zero baselines make the ratio meaningless, so emit
/// null instead of a blow-up.
fn relative_to(baseline: f64, value: f64) -> Option<f64> {
    if baseline.abs() < RATIO_BASELINE_EPS {
        None
    } else {
        Some(value / baseline)
    }
}

fn build_context<'a>(
    x_win: &CountSeries,
    s_win: Option<&'a CountSeries>,
    metrics: &[Metric],
) -> Result<WindowContext<'a>> {
    let moments = x_win.moments();
    let mut ctx = WindowContext {
        variance: moments.variance,
        mean: moments.mean,
        lag: None,
        lagged_cov: None,
        ordinal: None,
        external: s_win,
        rho_xs: None,
        sigma_s: None,
        cov_xs: None,
    };
    if metrics.contains(&Metric::Autocorr) {
        // Scan to half the window, the longest lag with a two-to-one
        // overlap margin.
        let lag = x_win.dominant_lag((x_win.len() / 2).max(1))?;
        ctx.lag = Some(lag);
        ctx.lagged_cov = Some(cross_covariance(x_win, x_win, lag)?);
    }
    if metrics.contains(&Metric::Wpe) {
        ctx.ordinal = Some(select_ordinal_params(
            x_win,
            ORDINAL_D_RANGE,
            ORDINAL_TAU_RANGE,
        )?);
    }
    if let Some(s) = s_win {
        if s.len() != x_win.len() {
            return Err(Error::LengthMismatch {
                left: x_win.len(),
                right: s.len(),
            });
        }
        if metrics.contains(&Metric::CovExternal) {
            ctx.cov_xs = Some(cross_covariance(x_win, s, 0)?);
        }
        if metrics.contains(&Metric::PearsonExternal) {
            ctx.rho_xs = Some(pearson(x_win, s)?);
            ctx.sigma_s = Some(s.moments().variance.sqrt());
        }
    }
    Ok(ctx)
}

/// Computes the requested metrics for one (possibly thinned) window. The
/// two forecast-based metrics share a single rolling run.
fn cell_metrics(
    y: &CountSeries,
    ctx: &WindowContext,
    metrics: &[Metric],
) -> Result<Vec<(Metric, f64)>> {
    let mut forecast: Option<ForecastRun> = None;
    let mut out = Vec::with_capacity(metrics.len());
    for &metric in metrics {
        let value = match metric {
            Metric::Autocorr => {
                let lag = ctx.lag.expect("context built for autocorr");
                let cov = cross_covariance(y, y, lag)?;
                let var = y.moments().variance;
                if var <= 0.0 {
                    return Err(Error::ConstantSeries {
                        label: y.label().to_string(),
                    });
                }
                cov / var
            }
            Metric::Wpe => {
                weighted_permutation_entropy(y, ctx.ordinal.as_ref().expect("context"))?
            }
            Metric::Mi => {
                let s = ctx.external.expect("validated");
                mutual_information(s, y, default_bin_count(y.len()))?
            }
            Metric::CovExternal => cross_covariance(y, ctx.external.expect("validated"), 0)?,
            Metric::PearsonExternal => pearson(y, ctx.external.expect("validated"))?,
            Metric::Nrmse | Metric::Arch => {
                if forecast.is_none() {
                    forecast = Some(rolling_forecast(
                        y,
                        SWEEP_TRAIN_FRACTION,
                        SWEEP_AR_ORDER,
                        1,
                    )?);
                }
                let run = forecast.as_ref().expect("just filled");
                match metric {
                    Metric::Nrmse => nrmse(run)?,
                    _ => elm_arch_test(&run.residuals, SWEEP_ARCH_MAX_LAG)?
                        .rejection_fraction(DEFAULT_ALPHA, 1, SWEEP_ARCH_MAX_LAG),
                }
            }
        };
        out.push((metric, value));
    }
    Ok(out)
}

/// The closed-form column. Predictions always evaluate the full-
/// resolution window moments at the cell's rate; nothing is re-estimated
/// from thinned data. Metrics without a closed form yield null.
fn theory_value(metric: Metric, ctx: &WindowContext, rate: f64) -> Result<Option<f64>> {
    match metric {
        Metric::Autocorr => {
            let sc = SampledCovariance::new(
                ctx.variance,
                ctx.mean,
                ctx.lagged_cov.expect("context built for autocorr"),
                rate,
            )?;
            Ok(Some(predicted_autocorrelation(&sc)?))
        }
        Metric::CovExternal => Ok(Some(predicted_external_covariance(
            ctx.cov_xs.expect("validated"),
            rate,
        )?)),
        Metric::PearsonExternal => {
            let sc = SampledCovariance::new(ctx.variance, ctx.mean, 0.0, rate)?;
            Ok(Some(predicted_external_pearson(
                ctx.rho_xs.expect("validated"),
                &sc,
                ctx.sigma_s.expect("validated"),
            )?))
        }
        _ => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// Emission.
// ---------------------------------------------------------------------------

/// Formats a number with 9 significant digits, the table-wide precision.
fn format_sig(value: f64) -> String {
    format!("{value:.8e}")
}

/// Rounds to the 9-significant-digit value actually emitted, so the JSON
/// encoding carries the same precision as the CSV.
fn round_sig(value: f64) -> f64 {
    format_sig(value).parse().expect("own formatting is parseable")
}

/// Renders the long-format CSV: header plus one row per record, nulls as
/// empty fields, all numbers at 9 significant digits.
pub fn render_csv(result: &SweepResult) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "label",
        "window",
        "rate",
        "replicate",
        "metric",
        "empirical",
        "theoretical",
        "relative",
    ])?;
    for r in &result.records {
        writer.write_record([
            r.label.as_str(),
            &r.window.to_string(),
            &format_sig(r.rate),
            &r.replicate.to_string(),
            r.metric.name(),
            &format_sig(r.empirical),
            &r.theoretical.map(format_sig).unwrap_or_default(),
            &r.relative.map(format_sig).unwrap_or_default(),
        ])?;
    }
    writer
        .into_inner()
        .map_err(|e| Error::InvalidConfig(format!("CSV buffer flush failed: {e}")))
}

/// Renders the same records as a JSON array of objects (null for absent
/// theoretical/relative values, numbers rounded to 9 significant digits).
pub fn render_json(result: &SweepResult) -> Result<Vec<u8>> {
    let rows: Vec<serde_json::Value> = result
        .records
        .iter()
        .map(|r| {
            serde_json::json!({
                "label": r.label,
                "window": r.window,
                "rate": round_sig(r.rate),
                "replicate": r.replicate,
                "metric": r.metric.name(),
                "empirical": round_sig(r.empirical),
                "theoretical": r.theoretical.map(round_sig),
                "relative": r.relative.map(round_sig),
            })
        })
        .collect();
    let mut bytes = serde_json::to_vec_pretty(&rows)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes the result table to `path` in the chosen format.
pub fn emit_results(
    result: &SweepResult,
    path: impl AsRef<Path>,
    format: OutputFormat,
) -> Result<()> {
    let bytes = match format {
        OutputFormat::Csv => render_csv(result)?,
        OutputFormat::Json => render_json(result)?,
    };
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}
