use std::path::PathBuf;

use thiserror::Error;

/// Problems with the configuration, reported before any stage runs.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config is not valid JSON: {0}")]
    Syntax(serde_json::Error),

    #[error("malformed override `{0}`: expected key=value")]
    BadOverride(String),

    #[error("override `{key}` cannot be applied: {reason}")]
    OverridePath { key: String, reason: String },

    #[error("config does not match the schema: {0}")]
    Schema(serde_json::Error),

    #[error("alpha must lie in (0, 0.5), got {0}")]
    AlphaOutOfRange(f64),

    #[error("replicates must be at least {min}, got {got}")]
    TooFewReplicates { min: usize, got: usize },

    #[error("region selector list is empty")]
    NoRegions,

    #[error("empty region selector at position {0}")]
    EmptySelector(usize),

    #[error("unknown region selector `{0}`")]
    UnknownSelector(String),

    #[error("unknown period `{0}` (expected annual, djf, mam, jja or son)")]
    UnknownPeriod(String),

    #[error("{field} refers to {path}, which does not exist")]
    MissingPath { field: String, path: PathBuf },

    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub fn name(&self) -> &'static str {
        match self {
            ConfigError::Read { .. } => "ConfigUnreadable",
            ConfigError::Syntax(_) => "ConfigSyntax",
            ConfigError::BadOverride(_) => "BadOverride",
            ConfigError::OverridePath { .. } => "BadOverride",
            ConfigError::Schema(_) => "ConfigSchema",
            ConfigError::AlphaOutOfRange(_) => "AlphaOutOfRange",
            ConfigError::TooFewReplicates { .. } => "TooFewReplicates",
            ConfigError::NoRegions => "EmptySelection",
            ConfigError::EmptySelector(_) => "EmptySelection",
            ConfigError::UnknownSelector(_) => "UnknownSelector",
            ConfigError::UnknownPeriod(_) => "UnknownPeriod",
            ConfigError::MissingPath { .. } => "MissingPath",
            ConfigError::Invalid { .. } => "InvalidConfig",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("stage `{stage}` needs {path}; run `{producer}` first")]
    MissingInput {
        stage: &'static str,
        path: PathBuf,
        producer: &'static str,
    },

    #[error(transparent)]
    Core(#[from] snowline::Error),

    #[error("cannot set up thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Stable identifier printed with the message.
    pub fn name(&self) -> &'static str {
        use snowline::Error as E;
        match self {
            CliError::Config(c) => c.name(),
            CliError::MissingInput { .. } => "MissingInput",
            CliError::Core(e) => match e {
                E::InvalidGrid(_) => "InvalidGrid",
                E::LatIndexOutOfRange { .. } => "LatIndexOutOfRange",
                E::InvalidTimeAxis(_) => "InvalidTimeAxis",
                E::ShapeMismatch(_) => "ShapeMismatch",
                E::EmptySelection(_) => "EmptySelection",
                E::AllMissing { .. } => "AllMissing",
                E::UnknownSelector(_) => "UnknownSelector",
                E::MalformedHeader { .. } => "MalformedHeader",
                E::ExtentMismatch { .. } => "ExtentMismatch",
                E::InvalidInput(_) => "InvalidInput",
                E::TooFewSamples { .. } => "TooFewSamples",
                E::NonPositiveSigma { .. } => "NonPositiveSigma",
                E::IncompleteCoverage(_) => "IncompleteCoverage",
                E::UndefinedMetric { .. } => "UndefinedMetric",
                E::ContradictoryVariance { .. } => "ContradictoryVariance",
                E::Thermo(_) => "Thermo",
                E::GaugeParse { .. } => "GaugeParse",
                E::Csv(_) => "Csv",
                E::Json(_) => "Json",
                E::Io(_) => "Io",
            },
            CliError::Threads(_) => "ThreadPool",
            CliError::Csv(_) => "Csv",
            CliError::Json(_) => "Json",
            CliError::Io(_) => "Io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
