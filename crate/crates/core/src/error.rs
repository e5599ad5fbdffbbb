//! Error types shared across the toolkit.

use thiserror::Error;

/// Toolkit-wide error type.
///
/// Variants are grouped by how a caller should react: malformed or
/// unsupported input data, infeasible configuration, or plain I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quality factor {0} outside [1, 100]")]
    InvalidQuality(i64),

    #[error("image {width}x{height} is smaller than one 8x8 block")]
    ImageTooSmall { width: usize, height: usize },

    #[error("unsupported JPEG feature: {0}")]
    UnsupportedFormat(String),

    #[error("JPEG parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("chain configuration infeasible: requested {requested} distinct chains of length {length}, only {achievable} exist")]
    InfeasibleChains {
        requested: usize,
        length: usize,
        achievable: u128,
    },

    #[error("chain sampling dead-ended {attempts} times for length {length}; configuration admits no chain")]
    ChainDeadEnd { length: usize, attempts: usize },

    #[error("corpus has {found} usable images, {needed} required")]
    CorpusTooSmall { found: usize, needed: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("network depth infeasible: {0}")]
    InfeasibleDepth(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the experiment stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code convention: 2 for data errors, 3 for infeasible
    /// configuration (usage errors are the CLI's, mapped to 1).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidQuality(_)
            | Error::InfeasibleChains { .. }
            | Error::ChainDeadEnd { .. }
            | Error::InfeasibleDepth(_)
            | Error::ConfigMismatch(_)
            | Error::InvalidConfig(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
