use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("step size {dt:e} s exceeds the stability limit {limit:e} s")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("density matrix invariant violated at t = {t:e} s: {what}")]
    InvariantViolation { t: f64, what: String },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular jacobian: {0}")]
    SingularJacobian(String),

    #[error("parameter `{name}` = {value:e} outside bounds [{lower:e}, {upper:e}]")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("sequence error: {0}")]
    Sequence(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
