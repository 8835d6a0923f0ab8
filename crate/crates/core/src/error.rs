use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout parse error at line {line}, column {column}: {message}")]
    LayoutParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("episode is over (t = {t}, horizon = {horizon})")]
    EpisodeOver { t: u32, horizon: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("checkpoint `{path}`: {message}")]
    Checkpoint { path: String, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
