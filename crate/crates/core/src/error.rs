use crate::model::Theta;

/// Errors produced anywhere in the identification pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("simulation blew up at t = {time:.6} (non-finite state)")]
    BlowUp { time: f64 },

    #[error("signal too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("no dominant frequency: peak power {peak:.3e} is below 3x median {median:.3e}")]
    NoDominantFrequency { peak: f64, median: f64 },

    #[error("degenerate signal: {0}")]
    Degenerate(String),

    #[error("tau selection failed: autocorrelation never drops below {threshold} within {max_lag} lags")]
    TauSelection { threshold: f64, max_lag: usize },

    #[error("insufficient data: {missing} of {total} grid entries have no pairs")]
    InsufficientData { missing: usize, total: usize },

    #[error("adjoint solver failed for theta ({:.6}, {:.6}, {:.6}) at t = {time:.6}: {reason}", theta.epsilon, theta.alpha, theta.d)]
    Stiffness {
        theta: Theta,
        time: f64,
        reason: String,
    },

    #[error("adjoint solve (n = {order}, i = {index}) failed: {source}")]
    Solve {
        order: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("jacobian column '{coordinate}' failed: {source}")]
    Jacobian {
        coordinate: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("normal equations are not positive definite")]
    NotPositiveDefinite,

    #[error("extrapolation initializer failed: {0}")]
    Initializer(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures an optimizer should treat as an infeasible point
    /// rather than a fatal condition.
    pub fn is_recoverable(&self) -> bool {
        match self {
            Error::Stiffness { .. } | Error::Domain(_) => true,
            Error::Solve { source, .. } | Error::Jacobian { source, .. } => source.is_recoverable(),
            _ => false,
        }
    }

    /// Coarse category, used for exit codes and structured error output.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_) => ErrorKind::Config,
            Error::TooShort { .. }
            | Error::NoDominantFrequency { .. }
            | Error::Degenerate(_)
            | Error::TauSelection { .. }
            | Error::InsufficientData { .. }
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::Domain(_)
            | Error::BlowUp { .. }
            | Error::Stiffness { .. }
            | Error::Solve { .. }
            | Error::Jacobian { .. }
            | Error::NotPositiveDefinite
            | Error::Initializer(_) => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
