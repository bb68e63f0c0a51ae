use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the decoding pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("raw signal size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },

    #[error("non-finite sample at byte offset {offset} (channel {channel}, sample {sample})")]
    NonFiniteSample { offset: u64, channel: usize, sample: usize },

    #[error("invalid band edges: low={low_hz} Hz, high={high_hz} Hz, rate={rate} Hz")]
    InvalidBand { low_hz: f64, high_hz: f64, rate: f64 },

    #[error("window geometry is not an integer number of samples: {0}")]
    NonIntegerSamples(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("projected channel {filter} has zero variance")]
    ZeroVariance { filter: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model is not trained: {0}")]
    NotTrained(String),

    #[error("label {label} missing from training set of {classes} classes")]
    MissingClass { label: usize, classes: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("component `{0}` has zero variance on the calibration set")]
    ZeroScoreVariance(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("frames out of order: {prev} s followed by {next} s")]
    OutOfOrder { prev: f64, next: f64 },

    #[error("feature file shape mismatch: {0}")]
    Shape(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Manifest { .. } => "manifest",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::NonFiniteSample { .. } => "non_finite_sample",
            Error::InvalidBand { .. } => "invalid_band",
            Error::NonIntegerSamples(_) => "non_integer_samples",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Singular(_) => "singular",
            Error::ZeroVariance { .. } => "zero_variance",
            Error::Dimension(_) => "dimension",
            Error::NotTrained(_) => "not_trained",
            Error::MissingClass { .. } => "missing_class",
            Error::NonFinite(_) => "non_finite",
            Error::ZeroScoreVariance(_) => "zero_score_variance",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::UnknownName(_) => "unknown_name",
            Error::OutOfOrder { .. } => "out_of_order",
            Error::Shape(_) => "shape",
            Error::Serde(_) => "serde",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
