use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (s outside
    /// [0,1], block index above the turn budget, time index out of range).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Inputs that are individually valid but do not belong together, such
    /// as a threshold table solved for a different problem.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("table is not in a solved state: {0}")]
    State(String),

    #[error("horizon exhausted: step {step} requested but n = {n}")]
    HorizonExhausted { step: usize, n: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("input of length {len} exceeds the limit of {max}")]
    Size { len: usize, max: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
