use thiserror::Error;

/// Errors produced by the simulator, the optimisers and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} needs {requested} qubits, more than the supported {max}")]
    Resource {
        what: &'static str,
        requested: usize,
        max: usize,
    },
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed chromosome: {0}")]
    MalformedChromosome(String),
    #[error("objective became non-finite at epoch {epoch} (value {value})")]
    Diverged { epoch: usize, value: f64 },
    #[error("non-finite objective value {0}")]
    NonFinite(f64),
    #[error("matrix is not a valid density matrix: {0}")]
    InvalidDensity(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
