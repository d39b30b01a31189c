use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PruneError>;

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: not an NWTF file (bad magic)")]
    BadMagic { path: PathBuf },

    #[error("unsupported NWTF format version {0}")]
    UnsupportedVersion(u32),

    #[error("tensor '{tensor}': record truncated ({needed} bytes needed, {available} available)")]
    Truncated {
        tensor: String,
        needed: u64,
        available: u64,
    },

    #[error("tensor '{tensor}': non-finite value at flat index {index}")]
    NonFinite { tensor: String, index: usize },

    #[error("tensor '{tensor}': unsupported dtype code {code}")]
    UnsupportedDtype { tensor: String, code: u8 },

    #[error("tensor '{tensor}': expected 4 dimensions, found {ndim}")]
    UnsupportedRank { tensor: String, ndim: u32 },

    #[error("tensor '{tensor}': {reason}")]
    InvalidTensor { tensor: String, reason: String },

    #[error("duplicate tensor name '{0}'")]
    DuplicateTensor(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error(
        "manifest: layer '{next}' expects {next_in} input channels but '{prev}' produces {prev_out}"
    )]
    ChannelMismatch {
        prev: String,
        next: String,
        prev_out: usize,
        next_in: usize,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("eigenvalue {value:e} of the sampled block is negative beyond the floor {floor:e}")]
    NegativeEigenvalue { value: f64, floor: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layer '{layer}': {source}")]
    Layer {
        layer: String,
        #[source]
        source: Box<PruneError>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl PruneError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PruneError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_layer(self, layer: &str) -> Self {
        PruneError::Layer {
            layer: layer.to_string(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by the environment or the invocation rather
    /// than by the numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            PruneError::Layer { source, .. } => source.is_input_error(),
            PruneError::NoConvergence { .. }
            | PruneError::NegativeEigenvalue { .. }
            | PruneError::DimensionMismatch(_) => false,
            _ => true,
        }
    }
}
