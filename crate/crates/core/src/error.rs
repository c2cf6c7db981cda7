use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum EmrError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward called on a non-scalar root of shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("parameter `{0}` registered twice")]
    DuplicateParameter(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("token id {token} outside vocabulary of size {vocab}")]
    TokenOutOfVocabulary { token: usize, vocab: usize },

    #[error("expected a {expected} item, got a {got} item")]
    WrongItemKind {
        expected: &'static str,
        got: &'static str,
    },

    #[error("cannot answer from an empty memory")]
    EmptyMemory,

    #[error("embedding dimension {dim} is not divisible by {heads} heads")]
    HeadsDoNotDivide { dim: usize, heads: usize },

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EmrError>;
