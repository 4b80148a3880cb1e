use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("capacity exceeded: dimension {needed} is above the cap {cap} (set HAMLET_MAX_DIM to raise it)")]
    Capacity { needed: u128, cap: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("operator is not Hermitian (asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("not a density operator: {0}")]
    NotDensity(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("post-solve projection moved the solution by {0:e}")]
    Projection(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
