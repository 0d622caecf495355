use std::path::PathBuf;

use thiserror::Error;

use crate::io::ply::PlyError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("empty mask: no non-zero pixels")]
    EmptyMask,

    #[error("mesh has zero surface area")]
    ZeroArea,

    #[error("cloud sizes differ ({0} vs {1}); resample both clouds to a common size first")]
    UnequalSizes(usize, usize),

    #[error("{n} points exceed the exact EMD cap of {cap}; use emd_approx instead")]
    ExceedsExactCap { n: usize, cap: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error(transparent)]
    Ply(#[from] PlyError),

    #[error("image format: {0}")]
    ImageFormat(String),

    #[error("image decode: {0}")]
    ImageDecode(String),

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::InvalidInput(_) => "invalid-input",
            Error::Empty(_) => "empty-input",
            Error::EmptyMask => "empty-mask",
            Error::ZeroArea => "zero-area",
            Error::UnequalSizes(..) => "unequal-sizes",
            Error::ExceedsExactCap { .. } => "exceeds-exact-cap",
            Error::UndefinedCorrelation(_) => "undefined-correlation",
            Error::Ply(e) => e.category(),
            Error::ImageFormat(_) => "image-format",
            Error::ImageDecode(_) => "image-decode",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Fold { source, .. } => source.category(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
