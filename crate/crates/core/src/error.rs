use thiserror::Error;

pub type Result<T, E = DdrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DdrError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("slot `{0}` is not in the table schema")]
    UnknownSlot(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("no database entry matches the current constraints")]
    EmptyMatch,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("every action is masked; no rescue is available")]
    RescueExhausted,

    #[error("training diverged: {0}")]
    NanLoss(String),

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("unknown goal id {0}")]
    UnknownGoal(usize),

    #[error("snapshot does not belong to this environment's schema")]
    SnapshotMismatch,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
