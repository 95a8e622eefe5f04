//! Binned mutual information between two count series.
//!
//! Both series are discretized into equal-width bins over their own
//! `[min, max]` range (the maximum falls in the top bin), a joint histogram
//! is formed, and the plug-in estimate
//!
//! ```text
//! I = sum_ij  p(i,j) ln [ p(i,j) / (p(i) q(j)) ]       (nats)
//! ```
//!
//! is returned. Natural-log units are used throughout; multiply by
//! `1/ln 2` for bits. The plug-in estimator is biased upward by roughly
//! `(B-1)^2 / 2n`, which is why the default bin count grows only like
//! `sqrt(n)` and is capped; a Miller–Madow corrected variant is provided
//! for diagnostics, but decay *ratios* across sampling rates — the quantity
//! of interest here — are insensitive to the correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::CountSeries;

/// Hard cap on the default bin count; past this the joint histogram is too
/// sparse for desk-scale series and the plug-in bias dominates.
pub const MAX_DEFAULT_BINS: usize = 32;

/// `ceil(sqrt(n))` capped at [`MAX_DEFAULT_BINS`] — the default histogram
/// resolution for a length-`n` series.
pub fn default_bin_count(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).clamp(1, MAX_DEFAULT_BINS)
}

/// A discretized series: per-point bin indices plus the edges that produced
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSeries {
    pub symbols: Vec<usize>,
    pub bin_count: usize,
    /// `bin_count + 1` ascending edges. For a constant series a single
    /// unit-width degenerate bin `[v, v+1)` is reported.
    pub bin_edges: Vec<f64>,
}

/// Equal-width discretization over `[min, max]`; the max value lands in the
/// top bin. A constant series collapses to one bin with every symbol 0.
pub fn discretize(series: &CountSeries, bins: usize) -> Result<SymbolSeries> {
    if bins == 0 {
        return Err(Error::InvalidConfig("bin count must be >= 1".into()));
    }
    let values = series.values();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(SymbolSeries {
            symbols: vec![0; values.len()],
            bin_count: 1,
            bin_edges: vec![lo, lo + 1.0],
        });
    }
    let width = (hi - lo) / bins as f64;
    let symbols = values
        .iter()
        .map(|&v| (((v - lo) / (hi - lo)) * bins as f64) as usize)
        .map(|idx| idx.min(bins - 1))
        .collect();
    let bin_edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    Ok(SymbolSeries {
        symbols,
        bin_count: bins,
        bin_edges,
    })
}

/// Plug-in mutual information in nats after discretizing both series with
/// the given bin count. Clamped at zero: the exact quantity is nonnegative
/// and only float rounding can push the sum microscopically below.
pub fn mutual_information(a: &CountSeries, b: &CountSeries, bins: usize) -> Result<f64> {
    let (terms, _, _, _) = joint_terms(a, b, bins)?;
    Ok(sum_canonical(terms).max(0.0))
}

/// Miller–Madow corrected mutual information:
/// `MI_plugin - (K_ab - K_a - K_b + 1) / (2n)` with `K` the occupied cell
/// counts. Diagnostics only; can be negative for weakly dependent series.
pub fn mutual_information_miller_madow(
    a: &CountSeries,
    b: &CountSeries,
    bins: usize,
) -> Result<f64> {
    let (terms, occupied_joint, occupied_a, occupied_b) = joint_terms(a, b, bins)?;
    let plugin = sum_canonical(terms).max(0.0);
    let n = a.len() as f64;
    let correction =
        (occupied_joint as f64 - occupied_a as f64 - occupied_b as f64 + 1.0) / (2.0 * n);
    Ok(plugin - correction)
}

/// Per-cell MI contributions plus occupancy counts. Contributions are
/// returned as a list so the caller can sum them in a canonical order.
#[allow(clippy::type_complexity)]
fn joint_terms(
    a: &CountSeries,
    b: &CountSeries,
    bins: usize,
) -> Result<(Vec<f64>, usize, usize, usize)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::SeriesTooShort {
            len: a.len(),
            required: 2,
            what: "mutual information".into(),
        });
    }
    let sa = discretize(a, bins)?;
    let sb = discretize(b, bins)?;
    let (ba, bb) = (sa.bin_count, sb.bin_count);
    let n = a.len() as f64;

    let mut joint = vec![0.0_f64; ba * bb];
    for (&i, &j) in sa.symbols.iter().zip(&sb.symbols) {
        joint[i * bb + j] += 1.0;
    }
    let mut marg_a = vec![0.0; ba];
    let mut marg_b = vec![0.0; bb];
    for i in 0..ba {
        for j in 0..bb {
            marg_a[i] += joint[i * bb + j];
            marg_b[j] += joint[i * bb + j];
        }
    }

    let mut terms = Vec::new();
    let mut occupied_joint = 0;
    for i in 0..ba {
        for j in 0..bb {
            let c = joint[i * bb + j];
            if c > 0.0 {
                occupied_joint += 1;
                let pij = c / n;
                let pi = marg_a[i] / n;
                let qj = marg_b[j] / n;
                terms.push(pij * (pij / (pi * qj)).ln());
            }
        }
    }
    let occupied_a = marg_a.iter().filter(|&&c| c > 0.0).count();
    let occupied_b = marg_b.iter().filter(|&&c| c > 0.0).count();
    Ok((terms, occupied_joint, occupied_a, occupied_b))
}

/// Sums contributions in a canonical (sorted) order so the result is
/// bit-identical under argument swap: the term multiset is symmetric in
/// (a, b), but a row-major traversal of the transposed histogram would
/// round differently.
fn sum_canonical(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}
