use thiserror::Error;

#[derive(Debug, Error)]
pub enum UpalError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid pool: {0}")]
    InvalidPool(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("query history is empty")]
    EmptyHistory,

    #[error("budget {budget} exceeds pool size {pool}")]
    BudgetExceedsPool { budget: usize, pool: usize },

    #[error("weighted moment matrix is singular (smallest pivot {pivot:e} below {threshold:e}); add regularization")]
    SingularSystem { pivot: f64, threshold: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("ERM solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<UpalError>,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown label value {value:?} at line {line}")]
    UnknownLabel { line: usize, value: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, UpalError>;
