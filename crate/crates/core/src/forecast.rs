//! Predictors and scoring: conditional-least-squares AR fitting,
//! Hannan–Rissanen ARMA estimation, AIC order search, step-ahead rolling
//! forecasts with periodic refits, the expanding-mean Poisson baseline,
//! and NRMSE.
//!
//! Fitting is regression-based throughout — deterministic, closed-form,
//! and dependency-free — rather than iterative maximum likelihood. That is
//! a deliberate trade: the experiments compare predictors across sampling
//! rates at trend level, where conditional least squares and HR are fully
//! adequate, and exact agreement with any particular ARIMA package is a
//! non-goal.
//!
//! Fitted models are kept in recursion form
//! `x_t = c + Σ φ_i x_{t-i} + ε_t + Σ θ_j ε_{t-j}` with `c` the regression
//! intercept. Unlike generator models, fitted coefficients are not forced
//! to be stationary — a fit is a description of data, not a simulator —
//! but a non-invertible moving-average estimate is refused because its
//! innovation recursion is numerically meaningless.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::series::CountSeries;

/// Invertibility margin for fitted MA polynomials, matching the generator's
/// stationarity margin.
const INVERTIBILITY_MARGIN: f64 = 1e-9;

/// Coefficients produced by [`fit_ar`] / [`fit_arma`], in recursion form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedArma {
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// Regression constant of the recursion (not an output-level shift).
    pub intercept: f64,
    /// RMS of the fit residuals.
    pub noise_std: f64,
    /// Coefficient on the contemporaneous external-signal column, when one
    /// was supplied to the fit.
    pub external_coeff: Option<f64>,
}

/// What produced a [`ForecastRun`]'s predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ModelSpec {
    Arma(FittedArma),
    /// Expanding-mean Poisson baseline; `rate` is the intensity used for
    /// the final prediction step.
    Poisson { rate: f64 },
}

/// A completed out-of-sample evaluation: aligned predictions, actuals, and
/// residuals over the test segment.
#[derive(Debug, Clone, Serialize)]
pub struct ForecastRun {
    pub train_length: usize,
    pub horizon: usize,
    pub predictions: Vec<f64>,
    pub actuals: Vec<f64>,
    /// `actual - prediction`, with the prediction as reported (clamped).
    pub residuals: Vec<f64>,
    pub model_spec: ModelSpec,
}

impl ForecastRun {
    /// Writes the run as `step,actual,predicted,residual` rows; `step`
    /// indexes the test segment from 0.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,actual,predicted,residual")?;
        for (i, ((a, p), r)) in self
            .actuals
            .iter()
            .zip(&self.predictions)
            .zip(&self.residuals)
            .enumerate()
        {
            writeln!(out, "{i},{a},{p},{r}")?;
        }
        Ok(())
    }
}

/// Normalized root-mean-square error of a run:
/// `sqrt(Σ (y - ŷ)² / T) / mean(y)` over the test segment.
pub fn nrmse(run: &ForecastRun) -> Result<f64> {
    let t = run.actuals.len() as f64;
    let mean = run.actuals.iter().sum::<f64>() / t;
    // Negated on purpose: an empty run makes `mean` NaN, which must land in
    // the error arm, and `mean <= 0.0` would wave it through.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(mean > 0.0) {
        return Err(Error::ZeroMeanActuals { mean });
    }
    let mse = run
        .residuals
        .iter()
        .map(|r| r * r)
        .sum::<f64>()
        / t;
    Ok(mse.sqrt() / mean)
}

/// Conditional least squares for an AR(k) model: regression of `x_t` on
/// `(1, x_{t-1}, …, x_{t-k})`. `k = 0` fits the mean-only model.
pub fn fit_ar(series: &CountSeries, k: usize) -> Result<FittedArma> {
    fit_values(series.values(), k, 0, None)
}

/// Hannan–Rissanen ARMA(k, l): a long-AR prefit supplies innovation
/// proxies, then a joint regression on lagged values and lagged proxies
/// yields the coefficients. `l = 0` reduces exactly to [`fit_ar`].
pub fn fit_arma(series: &CountSeries, k: usize, l: usize) -> Result<FittedArma> {
    fit_values(series.values(), k, l, None)
}

/// [`fit_arma`] with a contemporaneous external-signal column in the
/// second-stage regression (the "predict using S" variant). The external
/// series must align index-by-index with `series`.
pub fn fit_arma_with_external(
    series: &CountSeries,
    k: usize,
    l: usize,
    external: &CountSeries,
) -> Result<FittedArma> {
    if series.len() != external.len() {
        return Err(Error::LengthMismatch {
            left: series.len(),
            right: external.len(),
        });
    }
    fit_values(series.values(), k, l, Some(external.values()))
}

/// Long-AR prefit order: `ceil(min(n/10, 20))`, floored at `k + l` so the
/// proxy regression never has fewer lags than the model it feeds.
fn long_ar_order(n: usize, k: usize, l: usize) -> usize {
    let base = (n as f64 / 10.0).min(20.0).ceil() as usize;
    base.max(k + l).max(1)
}

/// Innovation proxies from a long-AR fit: zeros over the warm-up prefix,
/// residuals elsewhere.
fn innovation_proxies(values: &[f64], h: usize) -> Result<Vec<f64>> {
    let n = values.len();
    let (design, y) = lagged_design(values, h, 0, None, None, h);
    let beta = linalg::least_squares(&design, h + 1, &y)?;
    let mut eps = vec![0.0_f64; n];
    let cols = h + 1;
    for (row, e) in eps[h..].iter_mut().enumerate() {
        let mut fitted = 0.0;
        for c in 0..cols {
            fitted += design[row * cols + c] * beta[c];
        }
        *e = y[row] - fitted;
    }
    Ok(eps)
}

/// Builds the row-major regression design (intercept, k value lags, l
/// proxy lags, optional external column) over rows `start..n`.
fn lagged_design(
    values: &[f64],
    k: usize,
    l: usize,
    eps: Option<&[f64]>,
    external: Option<&[f64]>,
    start: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let cols = 1 + k + l + external.is_some() as usize;
    let rows = n - start;
    let mut design = Vec::with_capacity(rows * cols);
    let mut y = Vec::with_capacity(rows);
    for t in start..n {
        design.push(1.0);
        for i in 1..=k {
            design.push(values[t - i]);
        }
        if let Some(eps) = eps {
            for j in 1..=l {
                design.push(eps[t - j]);
            }
        }
        if let Some(s) = external {
            design.push(s[t]);
        }
        y.push(values[t]);
    }
    (design, y)
}

fn fit_values(
    values: &[f64],
    k: usize,
    l: usize,
    external: Option<&[f64]>,
) -> Result<FittedArma> {
    let n = values.len();
    let required = if l == 0 { 3 * k + 10 } else { 3 * (k + l) + 20 };
    if n < required {
        return Err(Error::SeriesTooShort {
            len: n,
            required,
            what: format!("ARMA({k},{l}) fit"),
        });
    }
    let (eps, start) = if l > 0 {
        let h = long_ar_order(n, k, l);
        (Some(innovation_proxies(values, h)?), k.max(h + l))
    } else {
        (None, k)
    };
    let (design, y) = lagged_design(values, k, l, eps.as_deref(), external, start);
    let cols = 1 + k + l + external.is_some() as usize;
    let beta = linalg::least_squares(&design, cols, &y)?;

    let rows = y.len();
    let mut rss = 0.0;
    for r in 0..rows {
        let mut fitted = 0.0;
        for c in 0..cols {
            fitted += design[r * cols + c] * beta[c];
        }
        rss += (y[r] - fitted).powi(2);
    }

    let ma: Vec<f64> = beta[1 + k..1 + k + l].to_vec();
    if l > 0 {
        let modulus = crate::synth::min_poly_root_modulus(&ma);
        if modulus < 1.0 + INVERTIBILITY_MARGIN {
            return Err(Error::UnstablePolynomial {
                which: "fitted moving-average".into(),
                modulus,
            });
        }
    }
    Ok(FittedArma {
        ar: beta[1..1 + k].to_vec(),
        ma,
        intercept: beta[0],
        noise_std: (rss / rows as f64).sqrt(),
        external_coeff: external.map(|_| beta[1 + k + l]),
    })
}

/// AIC order search over `k ∈ 0..=k_max, l ∈ 0..=l_max`.
///
/// All candidates are scored on one common regression window (the largest
/// any candidate needs) so their residual variances are directly
/// comparable — per-candidate windows would inject sampling differences an
/// order of magnitude larger than the AIC penalty spacing. The variance
/// estimate is degrees-of-freedom corrected, and
/// `AIC = rows·ln(σ̂²) + 2(k + l + 1)`; ties go to smaller `k + l`, then
/// smaller `k`.
pub fn select_order_aic(
    series: &CountSeries,
    k_max: usize,
    l_max: usize,
) -> Result<(usize, usize)> {
    let values = series.values();
    let n = values.len();
    let required = if l_max == 0 {
        3 * k_max + 10
    } else {
        3 * (k_max + l_max) + 20
    };
    if n < required {
        return Err(Error::SeriesTooShort {
            len: n,
            required,
            what: format!("ARMA order selection over ({k_max},{l_max})"),
        });
    }
    let (eps, start) = if l_max > 0 {
        let h = long_ar_order(n, k_max, l_max);
        (Some(innovation_proxies(values, h)?), k_max.max(h + l_max))
    } else {
        (None, k_max)
    };
    let rows = n - start;

    let mut best: Option<(f64, usize, usize)> = None;
    for k in 0..=k_max {
        for l in 0..=l_max {
            let params = k + l + 1;
            if rows <= params + 1 {
                continue;
            }
            let (design, y) = lagged_design(values, k, l, eps.as_deref(), None, start);
            let cols = 1 + k + l;
            let beta = match linalg::least_squares(&design, cols, &y) {
                Ok(beta) => beta,
                Err(Error::SingularDesign { .. }) => continue,
                Err(e) => return Err(e),
            };
            let mut rss = 0.0;
            for r in 0..rows {
                let mut fitted = 0.0;
                for c in 0..cols {
                    fitted += design[r * cols + c] * beta[c];
                }
                rss += (y[r] - fitted).powi(2);
            }
            let sigma2 = (rss / (rows - params) as f64).max(1e-300);
            let aic = rows as f64 * sigma2.ln() + 2.0 * params as f64;
            let better = match best {
                None => true,
                Some((b_aic, b_k, b_l)) => {
                    aic < b_aic
                        || (aic == b_aic
                            && (k + l < b_k + b_l || (k + l == b_k + b_l && k < b_k)))
                }
            };
            if better {
                best = Some((aic, k, l));
            }
        }
    }
    best.map(|(_, k, l)| (k, l)).ok_or(Error::SingularDesign {
        context: "no ARMA candidate admitted a non-singular fit".into(),
    })
}

/// One-step prediction of the recursion at time `t` given everything
/// before it; lags reaching past the start of the data contribute zero.
fn one_step(model: &FittedArma, values: &[f64], eps: &[f64], t: usize) -> f64 {
    let mut v = model.intercept;
    for (i, &phi) in model.ar.iter().enumerate() {
        if t > i {
            v += phi * values[t - 1 - i];
        }
    }
    for (j, &theta) in model.ma.iter().enumerate() {
        if t > j {
            v += theta * eps[t - 1 - j];
        }
    }
    v
}

/// Recomputes innovation estimates for `values[..limit]` under `model`.
fn rebuild_innovations(model: &FittedArma, values: &[f64], limit: usize) -> Vec<f64> {
    let mut eps = vec![0.0_f64; values.len()];
    for t in 0..limit {
        let pred = one_step(model, values, &eps, t);
        eps[t] = values[t] - pred;
    }
    eps
}

/// One-step-ahead forecasts over the test segment of a train/test split,
/// refitting on all data so far every `refit_every` steps
/// (`refit_every = 1` retrains at every step). Reported predictions are
/// clamped at zero — counts cannot be negative — while innovation
/// bookkeeping uses the raw model prediction.
pub fn rolling_forecast(
    series: &CountSeries,
    split: f64,
    order: (usize, usize),
    refit_every: usize,
) -> Result<ForecastRun> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must be in (0, 1), got {split}"
        )));
    }
    if refit_every == 0 {
        return Err(Error::InvalidConfig("refit_every must be >= 1".into()));
    }
    let values = series.values();
    let n = values.len();
    let train_length = (n as f64 * split).floor() as usize;
    if train_length == 0 || train_length >= n {
        return Err(Error::InvalidConfig(format!(
            "split {split} leaves no test segment for length {n}"
        )));
    }
    let (k, l) = order;

    let mut model: Option<FittedArma> = None;
    let mut eps = vec![0.0_f64; n];
    let mut predictions = Vec::with_capacity(n - train_length);
    let mut residuals = Vec::with_capacity(n - train_length);
    for t in train_length..n {
        if (t - train_length) % refit_every == 0 {
            let fitted = fit_values(&values[..t], k, l, None)?;
            if l > 0 {
                eps = rebuild_innovations(&fitted, values, t);
            }
            model = Some(fitted);
        }
        let model = model.as_ref().expect("refit runs on the first test step");
        let raw = one_step(model, values, &eps, t);
        if l > 0 {
            eps[t] = values[t] - raw;
        }
        let pred = raw.max(0.0);
        predictions.push(pred);
        residuals.push(values[t] - pred);
    }
    Ok(ForecastRun {
        train_length,
        horizon: n - train_length,
        actuals: values[train_length..].to_vec(),
        predictions,
        residuals,
        model_spec: ModelSpec::Arma(model.expect("at least one refit")),
    })
}

/// The Poisson baseline: the intensity at each test step is the mean of
/// all values before that step (expanding window), which is also the
/// prediction.
pub fn poisson_forecast(series: &CountSeries, split: f64) -> Result<ForecastRun> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must be in (0, 1), got {split}"
        )));
    }
    let values = series.values();
    let n = values.len();
    let train_length = (n as f64 * split).floor() as usize;
    if train_length == 0 || train_length >= n {
        return Err(Error::InvalidConfig(format!(
            "split {split} leaves no test segment for length {n}"
        )));
    }
    let mut cumulative: f64 = values[..train_length].iter().sum();
    let mut predictions = Vec::with_capacity(n - train_length);
    let mut residuals = Vec::with_capacity(n - train_length);
    let mut rate = cumulative / train_length as f64;
    for (t, &value) in values.iter().enumerate().skip(train_length) {
        rate = cumulative / t as f64;
        predictions.push(rate);
        residuals.push(value - rate);
        cumulative += value;
    }
    Ok(ForecastRun {
        train_length,
        horizon: n - train_length,
        actuals: values[train_length..].to_vec(),
        predictions,
        residuals,
        model_spec: ModelSpec::Poisson { rate },
    })
}
