use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unphysical load: deflection {deflection_m:.4} m is not below tire radius {radius_m:.4} m")]
    UnphysicalLoad { deflection_m: f64, radius_m: f64 },

    #[error("corrupt encoder stream at sample {index}: {reason}")]
    CorruptStream { index: usize, reason: String },

    #[error("contact patch not found: {0}")]
    PatchNotFound(String),

    #[error("resampling window [{from_deg:.2}, {to_deg:.2}] deg not covered by trace samples")]
    WindowNotCovered { from_deg: f64, to_deg: f64 },

    #[error("degenerate channel {channel}: min == max == {value}")]
    DegenerateChannel { channel: String, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("measured series has zero peak magnitude; NRMS is undefined")]
    UndefinedNormalizer,

    #[error("model format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
