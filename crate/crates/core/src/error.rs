use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Precondition failures are reported as [`Error::InvalidInput`]; numerical
/// breakdowns carry enough context to reproduce the failing configuration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("partition rejected: {0}")]
    Partition(#[from] crate::bubbles::PartitionViolation),

    #[error("non-finite value at node {index} (r = {radius:e})")]
    NonFinite { index: usize, radius: f64 },

    #[error("mesh mismatch between grid functions")]
    MeshMismatch,

    #[error("singular linear system at row {0}")]
    Singular(usize),

    #[error("Gram matrix condition number {0:e} exceeds 1e12")]
    IllConditioned(f64),

    #[error("Newton failed to converge after {iterations} iterations (residual trace: {trace:?})")]
    NoConvergence { iterations: usize, trace: Vec<f64> },

    #[error("solution component {component} is not positive at r = {radius:e} (value {value:e})")]
    Positivity {
        component: usize,
        radius: f64,
        value: f64,
    },

    #[error("rate fit failed: relative residual {0:.3} exceeds 20% of the signal")]
    FitFailure(f64),

    #[error("outside desk-scale envelope: {0}")]
    Envelope(String),

    #[error("unknown lemma `{name}`; valid names: {valid}")]
    UnknownLemma { name: String, valid: String },

    #[error("sweep failed at eps = {eps:e}: {source}")]
    Sweep {
        eps: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("record error: {0}")]
    Record(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
