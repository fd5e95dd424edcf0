use thiserror::Error;

/// Errors produced by the geometry kernels, solvers and checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("{op} is not supported on the {backend} backend")]
    UnsupportedBackend { op: &'static str, backend: &'static str },

    #[error("flow kind {kind} cannot run on the {backend} backend: {reason}")]
    IncompatibleKind {
        kind: &'static str,
        backend: &'static str,
        reason: String,
    },

    #[error("metric degenerated at t = {t}: {detail}")]
    Extinction { t: f64, detail: String },

    #[error("positivity lost at node {node}, t = {t}: u = {value}")]
    Positivity { node: usize, t: f64, value: f64 },

    #[error("quantity {0} divides by t and was evaluated at t = 0")]
    DivisionByTime(&'static str),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed snapshot: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, GeoError>;

pub(crate) fn invalid(msg: impl Into<String>) -> GeoError {
    GeoError::InvalidParameter(msg.into())
}
