//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Everything that can go wrong in the toolkit.
///
/// Errors split into two families for process exit codes: I/O failures
/// (`exit_code` 1) and validation failures (`exit_code` 2). Content-level
/// problems in an otherwise readable file count as validation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {detail}")]
    MalformedHeader { detail: String },

    #[error("tensor '{tensor}': unsupported dtype '{dtype}' (only F32 is supported)")]
    UnsupportedDtype { tensor: String, dtype: String },

    #[error("tensor '{tensor}': {detail}")]
    BadOffsets { tensor: String, detail: String },

    #[error("tensor '{tensor}': non-finite value at byte offset {byte_offset}")]
    NonFinite { tensor: String, byte_offset: u64 },

    #[error("tensor '{tensor}': {detail}")]
    BadShape { tensor: String, detail: String },

    #[error("duplicate tensor name '{name}'")]
    DuplicateTensor { name: String },

    #[error("tensor '{name}' not found")]
    MissingTensor { name: String },

    #[error("invalid manifest: {detail}")]
    InvalidManifest { detail: String },

    #[error("unknown component '{name}'")]
    UnknownComponent { name: String },

    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },

    #[error("tensor '{tensor}': wanda requires rank-2 weights (rank is {rank})")]
    WandaRequiresRank2 { tensor: String, rank: usize },

    #[error("wanda requires activation norms")]
    WandaRequiresNorms,

    #[error("no activation norms available for layer '{layer}'")]
    MissingNorms { layer: String },

    #[error("sparsity {value} is outside [0, 1]")]
    InvalidSparsity { value: f64 },

    #[error("invalid argument: {detail}")]
    InvalidArgument { detail: String },

    #[error("calibration stream is empty")]
    EmptyCalibration,

    #[error("invalid json in {what}: {source}")]
    Json {
        what: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Process exit code this error maps to: 1 for I/O, 2 for validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
