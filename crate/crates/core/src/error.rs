use thiserror::Error;

/// Failure taxonomy shared by every module in the crate.
///
/// `InvalidInput` covers malformed caller data (bad weights, non-unit
/// vectors, empty ranges). `InvalidMetric` and `DegenerateMetric` are
/// metric-level rejections: the first for parameters outside the
/// admissible range, the second for parameter choices that make the
/// requested computation meaningless (for example asking for the
/// rotated closed-geodesic catalog of the round metric).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),
    #[error("integration failure: {0}")]
    IntegrationFailure(String),
    #[error("boundary ambiguous: {0}")]
    BoundaryAmbiguous(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invalid_metric(msg: impl Into<String>) -> Self {
        Error::InvalidMetric(msg.into())
    }
}
