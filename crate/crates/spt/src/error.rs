use thiserror::Error;

/// Library result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by model construction, solvers and simulators.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (non-finite values, wrong dimensions, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Parameter outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Evaluation requested too close to the simplex boundary.
    #[error("boundary error: {0}")]
    BoundaryError(String),

    /// A numerical routine failed to deliver the requested accuracy.
    #[error("numerical error: {0}")]
    NumericalError(String),
}
