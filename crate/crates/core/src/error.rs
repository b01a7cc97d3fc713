use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("conjugate solver diverged at step {step} (step size too large?)")]
    SolverDiverged { step: usize },

    #[error("non-finite gradient entry in tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },

    #[error("tensor layout mismatch: {0}")]
    ShapeMismatch(String),

    #[error("grid oracle supports dimension at most 3, got {0}")]
    UnsupportedDimension(usize),

    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    #[error("degenerate diagnostic: {0}")]
    Degenerate(String),

    #[error("repetition {rep} failed: {source}")]
    Repetition {
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
