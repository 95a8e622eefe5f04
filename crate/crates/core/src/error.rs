//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants are grouped by the
//! stage that raises them: series construction, estimation preconditions,
//! model construction, fitting, and I/O.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A count series must contain at least one value.
    #[error("series `{label}` is empty")]
    EmptySeries { label: String },

    /// Counts are event tallies and cannot be negative.
    #[error("series `{label}` has negative value {value} at index {index}")]
    NegativeValue {
        label: String,
        index: usize,
        value: f64,
    },

    /// NaN or infinity in a series.
    #[error("series `{label}` has non-finite value at index {index}")]
    NonFiniteValue { label: String, index: usize },

    /// Pairwise estimators require equal-length inputs.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A lagged estimator needs at least two overlapping points.
    #[error("lag {lag} leaves {overlap} overlapping points (need >= 2)")]
    InsufficientOverlap { lag: usize, overlap: usize },

    /// Correlation of a (locally) constant series is undefined.
    #[error("correlation undefined: zero variance in `{label}`")]
    ConstantSeries { label: String },

    /// Sampling rates live in [0, 1].
    #[error("sampling rate {rate} outside [0, 1]")]
    InvalidRate { rate: f64 },

    /// Input too short for the requested embedding or fit.
    #[error("series of length {len} too short: need at least {required} for {what}")]
    SeriesTooShort {
        len: usize,
        required: usize,
        what: String,
    },

    /// Grid search found no evaluable parameter pair.
    #[error("no feasible (order, delay) pair for series of length {len}")]
    NoFeasibleParams { len: usize },

    /// A model whose characteristic polynomial has a root on or inside the
    /// unit disk does not define a stationary (or invertible) process.
    #[error("{which} polynomial root of modulus {modulus:.6} inside stationarity bound")]
    UnstablePolynomial { which: String, modulus: f64 },

    /// Nonnegativity clipping touched too many points to trust the
    /// second-order structure of the generated series.
    #[error("nonnegativity clipping hit {clipped}/{total} points (limit 0.1%)")]
    ExcessiveClipping { clipped: usize, total: usize },

    /// Normal-equation solve hit a (numerically) singular design matrix.
    #[error("singular regression design: {context}")]
    SingularDesign { context: String },

    /// A heteroskedasticity test on constant squared residuals is undefined.
    #[error("degenerate test: residual squares have zero variance")]
    DegenerateTest,

    /// NRMSE normalizes by the mean of the actuals, which must be positive.
    #[error("cannot normalize error: mean of actuals is {mean}")]
    ZeroMeanActuals { mean: f64 },

    /// Configuration rejected before any computation ran.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An upstream failure inside one sweep cell, tagged with the cell
    /// coordinates. Baseline-stage failures report as the `(rate 1,
    /// replicate 0)` cell of their window.
    #[error("sweep cell (window {window}, rate {rate}, replicate {replicate}): {source}")]
    SweepCell {
        window: usize,
        rate: f64,
        replicate: u64,
        #[source]
        source: Box<Error>,
    },

    /// Requested column is absent from the CSV header.
    #[error("column `{column}` not found in CSV header")]
    MissingColumn { column: String },

    /// A CSV row failed to parse; `line` is 1-based and counts the header.
    #[error("malformed CSV row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
