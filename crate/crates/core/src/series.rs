//! Count-series container and moment/correlation estimators.
//!
//! A [`CountSeries`] is an ordered sequence of nonnegative real event counts
//! on a uniform, dimensionless time grid; the index *is* the timestamp.
//! Fractional values are allowed because model-generated counts are
//! real-valued.
//!
//! All moment estimators use the population convention (divide by `n`, not
//! `n − 1`). The closed-form sampling results consumed downstream are exact
//! relations between population moments, so plugging these estimates into
//! them stays internally consistent. Lagged statistics are computed on the
//! overlapping window only — no padding, no circular wrap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance under which two |autocorrelation| values are considered tied
/// when scanning for the dominant lag. Exactly periodic signals produce
/// ties that differ only by float rounding; without a tolerance the winner
/// would depend on the series length.
const LAG_TIE_EPS: f64 = 1e-9;

/// An ordered, uniformly spaced sequence of nonnegative event counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    label: String,
    values: Vec<f64>,
    /// Abstract spacing between consecutive observations. Dimensionless;
    /// kept for provenance only and never entering any estimator.
    step: f64,
}

impl CountSeries {
    /// Builds a series after validating every value is finite and `>= 0`.
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if values.is_empty() {
            return Err(Error::EmptySeries { label });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteValue { label, index });
            }
            if value < 0.0 {
                return Err(Error::NegativeValue {
                    label,
                    index,
                    value,
                });
            }
        }
        Ok(Self {
            label,
            values,
            step: 1.0,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false — construction rejects empty series — but kept so the
    /// container follows the usual collection conventions.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Population mean and variance.
    pub fn moments(&self) -> Moments {
        let (mean, variance) = mean_variance(&self.values);
        Moments {
            mean,
            variance,
            count: self.values.len(),
        }
    }

    /// Pearson correlation between the series and its lag-shifted self,
    /// estimated over the `len − lag` overlapping points.
    ///
    /// `autocorrelation(0)` is exactly 1 for any non-constant series.
    pub fn autocorrelation(&self, lag: usize) -> Result<f64> {
        let (head, tail) = self.lag_windows(lag)?;
        pearson_slices(head, tail, &self.label)
    }

    /// The lag in `[1, max_lag]` with the largest `|autocorrelation|`.
    ///
    /// Ties — including float-level ones, compared with a small tolerance —
    /// resolve to the smallest lag for determinism. Note that an exactly
    /// periodic signal of even period `2k` is perfectly *anti*-correlated at
    /// lag `k`, so the scan reports the half period `k`, not `2k`.
    pub fn dominant_lag(&self, max_lag: usize) -> Result<usize> {
        if max_lag == 0 {
            return Err(Error::InvalidConfig(
                "dominant_lag requires max_lag >= 1".into(),
            ));
        }
        if self.len() <= max_lag + 1 {
            return Err(Error::SeriesTooShort {
                len: self.len(),
                required: max_lag + 2,
                what: format!("dominant lag scan to {max_lag}"),
            });
        }
        let mut best_lag = 1;
        let mut best_abs = self.autocorrelation(1)?.abs();
        for lag in 2..=max_lag {
            let abs = self.autocorrelation(lag)?.abs();
            if abs > best_abs + LAG_TIE_EPS {
                best_abs = abs;
                best_lag = lag;
            }
        }
        Ok(best_lag)
    }

    /// Splits the series into the two windows that overlap at `lag`:
    /// `(x_0.., x_lag..)` trimmed to equal length.
    fn lag_windows(&self, lag: usize) -> Result<(&[f64], &[f64])> {
        let n = self.values.len();
        if n < lag + 2 {
            return Err(Error::InsufficientOverlap {
                lag,
                overlap: n.saturating_sub(lag),
            });
        }
        let overlap = n - lag;
        Ok((&self.values[..overlap], &self.values[lag..]))
    }
}

/// Population mean/variance summary of one series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub count: usize,
}

/// Population covariance of `(a_t, b_{t+lag})` over the overlapping window.
///
/// Both window means are estimated on the overlap itself.
pub fn cross_covariance(a: &CountSeries, b: &CountSeries, lag: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < lag + 2 {
        return Err(Error::InsufficientOverlap {
            lag,
            overlap: n.saturating_sub(lag),
        });
    }
    let overlap = n - lag;
    Ok(covariance_slices(&a.values()[..overlap], &b.values()[lag..]))
}

/// Pearson correlation at lag 0. Errors on constant input.
pub fn pearson(a: &CountSeries, b: &CountSeries) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientOverlap {
            lag: 0,
            overlap: a.len(),
        });
    }
    let r = pearson_slices(a.values(), b.values(), a.label())?;
    // The b-side constant check lives in pearson_slices too; the label in
    // the error should name the offending series.
    Ok(r)
}

fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, variance)
}

fn covariance_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - mean_a) * (y - mean_b))
        .sum::<f64>()
        / n
}

fn pearson_slices(a: &[f64], b: &[f64], label: &str) -> Result<f64> {
    let (_, var_a) = mean_variance(a);
    let (_, var_b) = mean_variance(b);
    if var_a <= 0.0 || var_b <= 0.0 {
        return Err(Error::ConstantSeries {
            label: label.to_string(),
        });
    }
    Ok(covariance_slices(a, b) / (var_a.sqrt() * var_b.sqrt()))
}
