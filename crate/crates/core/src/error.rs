use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// The monotonic gate has no meaning for this input (singleton ensemble or
    /// zero candidate variance).
    #[error("gate inapplicable: {0}")]
    GateInapplicable(String),

    #[error("correlation {rho} is below the equicorrelation bound {bound} for M = {size}")]
    NotPositiveSemidefinite { rho: f64, bound: f64, size: usize },

    #[error("target error {expected_error} cannot be reached: noise {noise} + variance {variance} exceeds it")]
    InconsistentTarget {
        expected_error: f64,
        noise: f64,
        variance: f64,
    },

    #[error("inadmissible bagging model: {0}")]
    InadmissibleModel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("surrogate evaluation failed at start {start}: {message}")]
    Surrogate { start: usize, message: String },
}

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
