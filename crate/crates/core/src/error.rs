use std::path::PathBuf;

use crate::model::Site;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("token id {id} out of range for vocabulary of size {size}")]
    InvalidTokenId { id: u32, size: usize },

    #[error("invalid token sequence: {0}")]
    InvalidTokens(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sequence of length {len} exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at site {site} position {position}")]
    NonFinite { site: Site, position: usize },

    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("corrupt tensor file: {0}")]
    CorruptFile(String),

    #[error("grammar cannot reach length bin {bin}")]
    UnreachableBin { bin: String },

    #[error("interpolation endpoint {which} does not recover its source sentence")]
    EndpointNotRecovered { which: usize },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("config hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
