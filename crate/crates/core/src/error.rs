use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file not found")]
    MissingFile { path: PathBuf },

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },

    #[error("truncated payload: header declares {expected} values, payload holds {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("malformed {format} data: {reason}")]
    Format {
        format: &'static str,
        reason: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of range 1..={max}")]
    OutOfRange { index: usize, max: usize },

    #[error(
        "eigen-solver did not converge within {sweeps} sweeps (off-diagonal norm {residual:e})"
    )]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("training diverged at epoch {epoch}, batch {batch}: {reason}")]
    Diverged {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("degenerate metric: {0}")]
    Degenerate(String),

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stable machine-readable code, printed by the CLI next to the message.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::MissingFile { .. } => "E_PATH",
            Error::BadMagic { .. } => "E_MAGIC",
            Error::UnsupportedVersion { .. } => "E_VERSION",
            Error::Truncated { .. } => "E_TRUNCATED",
            Error::NonFinite { .. } => "E_NONFINITE",
            Error::Format { .. } => "E_FORMAT",
            Error::InvalidInput(_) => "E_INVALID",
            Error::ShapeMismatch(_) => "E_SHAPE",
            Error::OutOfRange { .. } => "E_RANGE",
            Error::NoConvergence { .. } => "E_CONVERGENCE",
            Error::Diverged { .. } => "E_DIVERGED",
            Error::NonFiniteActivation { .. } => "E_NONFINITE_ACTIVATION",
            Error::Degenerate(_) => "E_DEGENERATE",
            Error::Json { .. } => "E_JSON",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }
}
