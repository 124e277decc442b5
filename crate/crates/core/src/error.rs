use std::io;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum PcnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("layer index {index} out of range 1..={max}")]
    LayerOutOfRange { index: usize, max: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parameter count {count} exceeds the dense second-order guard of {limit}")]
    ParameterGuard { count: usize, limit: usize },

    #[error("singular system (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("factorization failed: matrix is not positive definite after damping")]
    NotPositiveDefinite,

    #[error("missing series: {0}")]
    MissingSeries(String),

    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Errors from the binary readers and writers (IDX datasets and checkpoints).
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("checkpoint truncated inside layer {layer}")]
    TruncatedLayer { layer: usize },

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),

    #[error("unknown activation id {0}")]
    UnknownActivation(u8),

    #[error("inconsistent dimensions: {0}")]
    Inconsistent(String),
}

pub type Result<T, E = PcnError> = std::result::Result<T, E>;
