//! Crate-wide error type.

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("dangling reference in {record} record: {msg}")]
    DanglingRef { record: String, msg: String },

    #[error("attribute schema mismatch for user {id}: {msg}")]
    SchemaMismatch { id: String, msg: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("corpus is empty after min-count filtering")]
    EmptyCorpus,

    #[error("no positive pairs")]
    EmptyPairs,

    #[error("graph has no labeled users")]
    NoLabeledUsers,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class: 2 for validation failures, 3 for numeric ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged { .. } | Error::NonFinite(_) => 3,
            _ => 2,
        }
    }
}
