use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid token set: {}", .0.join("; "))]
    InvalidTokenSet(Vec<String>),

    #[error("degenerate token embedding at row {row}")]
    DegenerateEmbedding { row: usize },

    #[error("embeddings must be unit-normalized")]
    NotNormalized,

    #[error("more crops than tokens ({crops} > {tokens})")]
    TooManyCrops { crops: usize, tokens: usize },

    #[error("budget exceeds token count ({budget} > {available})")]
    BudgetExceeded { budget: usize, available: usize },

    #[error("retain_count must be ≥ 1")]
    EmptyBudget,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no visual evidence")]
    NoVisualEvidence,

    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f32),

    #[error("vocabulary must contain at least 2 entries, got {0}")]
    VocabularyTooSmall(usize),

    #[error("fewer than 2 retained tokens")]
    TooFewRetained,

    #[error("attention vector sums to zero")]
    ZeroAttention,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("checksum mismatch for tensor `{name}`")]
    Checksum { name: String },

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error("config digest mismatch for image `{0}`")]
    DigestMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
