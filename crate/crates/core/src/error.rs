use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested value is not in the image of the selected transform branch.
    #[error("value {value} is outside the branch image ({lo}, {hi})")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    /// A numerical routine failed to converge or produced a non-finite result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// Evaluation point too close to an eigenvalue of the unperturbed matrix.
    #[error("z = {z} lies on the pole at eigenvalue {lambda}")]
    Pole { z: f64, lambda: f64 },

    /// The kernel of the master matrix has dimension greater than one.
    #[error("degenerate eigenvalue at z = {z}: smallest singular values {s_min:e} and {s_next:e}")]
    Degenerate { z: f64, s_min: f64, s_next: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
