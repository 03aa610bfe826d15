use thiserror::Error;

/// Errors raised anywhere in the model, data or evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("softmax of an empty vector")]
    EmptySoftmax,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("item index {item} at position {position} is out of range (n_items = {n_items})")]
    ItemOutOfRange {
        item: u32,
        position: usize,
        n_items: usize,
    },
    #[error("empty sequence")]
    EmptySequence,
    #[error("user {0} has interacted with every item; no negative can be sampled")]
    NoNegative(usize),
    #[error("every item is excluded from ranking")]
    NothingToRank,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("no negative candidates for AUC")]
    NoAucNegatives,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty result: no user survives filtering")]
    EmptyCorpus,
    #[error("unknown synthetic pattern `{0}` (expected markov1, periodic or gift-noise)")]
    UnknownPattern(String),
    #[error("unsupported {what} format_version {found} (expected {expected})")]
    FormatVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("invalid corpus document: {0}")]
    InvalidCorpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
