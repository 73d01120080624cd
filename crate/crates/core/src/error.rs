use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("latitude index {index} out of range for grid with {nlat} rows")]
    LatIndexOutOfRange { index: usize, nlat: usize },

    #[error("invalid time axis: {0}")]
    InvalidTimeAxis(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("selection `{0}` contains no pixels")]
    EmptySelection(String),

    #[error("selection `{selector}` has no valid data at time index {time_index}")]
    AllMissing { selector: String, time_index: usize },

    #[error("unknown selector `{0}`")]
    UnknownSelector(String),

    #[error("malformed dataset header {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("extent mismatch in {path}: expected {expected} bytes, found {found}")]
    ExtentMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("non-positive error standard deviation {sigma} for product {index}")]
    NonPositiveSigma { index: usize, sigma: f64 },

    #[error("incomplete calendar coverage: {0}")]
    IncompleteCoverage(String),

    #[error("metric {metric} undefined: {cause}")]
    UndefinedMetric {
        metric: &'static str,
        cause: &'static str,
    },

    #[error("Mann-Kendall variance is zero while S = {s}")]
    ContradictoryVariance { s: i64 },

    #[error(transparent)]
    Thermo(#[from] crate::thermo::ThermoError),

    #[error("gauge CSV line {line}: {reason}")]
    GaugeParse { line: u64, reason: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
