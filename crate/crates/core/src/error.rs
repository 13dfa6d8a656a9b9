use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing recording file for subject {subject}, task {task}")]
    MissingFile { subject: String, task: String },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-numeric cell in {path} at row {row}, column {col}: {value:?}")]
    NonNumericCell {
        path: PathBuf,
        row: usize,
        col: usize,
        value: String,
    },

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("frequency {freq_hz} Hz outside (0, {nyquist_hz}) Hz")]
    FrequencyOutOfRange { freq_hz: f64, nyquist_hz: f64 },

    #[error("unstable filter: pole magnitude {0} >= 1")]
    UnstableFilter(f64),

    #[error("invalid filter specification: {0}")]
    InvalidSpec(String),

    #[error("window of {window_len} samples does not fit {count} windows into {n_samples} samples")]
    WindowTooLong {
        window_len: usize,
        count: usize,
        n_samples: usize,
    },

    #[error("window plan needs {needed} samples but recording has {available}")]
    PlanMismatch { needed: usize, available: usize },

    #[error("Welch segment of {segment} samples exceeds signal length {len}")]
    SegmentTooLong { segment: usize, len: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite gradient in parameter {0}")]
    NaNGradient(String),

    #[error("class {0} has too few subjects for leave-one-subject-out with a validation pair")]
    ClassMissing(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("type error for configuration key `{key}`: expected {expected}")]
    TypeError { key: String, expected: String },

    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("checkpoint not found: {0}")]
    CheckpointNotFound(PathBuf),

    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
