use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix dimension {dim} exceeds the dense cutoff {cutoff}")]
    DimensionExceeded { dim: usize, cutoff: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("Krylov iteration did not converge (subspace dimension {dims}, {substeps} substeps)")]
    NoConvergence { dims: usize, substeps: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("boundary quantity unavailable: {0}")]
    Unavailable(String),

    #[error("insufficient history: need {needed} samples, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("missing boundary correction: {0}")]
    MissingCorrection(String),

    #[error("error value at position {0} is not positive")]
    NonPositiveError(usize),

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("step {index} failed: {source}")]
    Step { index: usize, source: Box<Error> },

    #[error("run with k = {k:e}, h = {h:e} failed: {source}")]
    Run { k: f64, h: f64, source: Box<Error> },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
