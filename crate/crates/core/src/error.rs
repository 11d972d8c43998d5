use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnnError {
    #[error("context must have at least one coordinate")]
    EmptyContext,
    #[error("context coordinate {index} is not finite")]
    NonFinite { index: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("arm {arm} out of range for {num_arms} arms")]
    UnknownArm { arm: usize, num_arms: usize },
    #[error("time index {time} must exceed the stored horizon {horizon}")]
    NonIncreasingTime { time: u64, horizon: u64 },
    #[error("requested {requested} neighbors but only {available} samples are stored")]
    InsufficientSamples { requested: usize, available: usize },
    #[error("neighbor count must be positive")]
    ZeroNeighbors,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("margin exponent alpha must lie in (0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("need at least one batch")]
    ZeroBatches,
    #[error("horizon {horizon} is too short for {batches} batches (need at least {})", 2 * batches)]
    HorizonTooShort { horizon: u64, batches: usize },
    #[error("no geometric grid with {batches} strictly increasing endpoints reaches horizon {horizon} in dimension {dim}")]
    Infeasible {
        horizon: u64,
        batches: usize,
        dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("round {time} lies outside the current batch ({start}, {end}]")]
    OutsideBatch { time: u64, start: u64, end: u64 },
    #[error("batch {batch} ends at round {end} but only {round} rounds have been played")]
    CommitMidBatch { batch: usize, round: u64, end: u64 },
    #[error("round {0} was already recorded")]
    DuplicateRecord(u64),
    #[error("all {0} batches are already committed")]
    Finished(usize),
    #[error("normalized coordinate {coord} = {value} lies outside [0, 1]")]
    OutOfSupport { coord: usize, value: f64 },
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Knn(#[from] KnnError),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment parameters: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: row {row}, column {column}: `{value}` is not a number")]
    NonNumeric {
        path: PathBuf,
        row: usize,
        column: usize,
        value: String,
    },
    #[error("{path}: row {row} has no value in the label column")]
    MissingLabel { path: PathBuf, row: usize },
    #[error("{path}: label column `{column}` not found")]
    UnknownLabelColumn { path: PathBuf, column: String },
    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("{path}: need at least two distinct labels, found {found}")]
    SingleClass { path: PathBuf, found: usize },
    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
    #[error("{path}: no feature columns besides the label")]
    NoFeatures { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("window must be positive")]
    ZeroWindow,
    #[error("window {window} exceeds trace length {len}")]
    WindowTooLong { window: usize, len: usize },
    #[error("need at least two runs to estimate a standard error, got {0}")]
    TooFewRuns(usize),
    #[error("run {run} has {found} checkpoints, expected {expected}")]
    Ragged {
        run: usize,
        found: usize,
        expected: usize,
    },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

impl ConfigError {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Self::Invalid {
            field,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("dataset has {rows} rows, fewer than the {needed} needed for {batches} batches")]
    DatasetTooShort {
        rows: usize,
        needed: u64,
        batches: usize,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot serialize manifest: {0}")]
    Manifest(#[from] toml::ser::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}
