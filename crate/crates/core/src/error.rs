use thiserror::Error;

/// Errors raised across the pushing stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PushError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("contact angle {phi} is at a tangent singularity")]
    TangentSingularity { phi: f64 },

    #[error("force {fn_:.3e}/{ft:.3e} N with phi rate {phi_dot:.3e} rad/s matches no contact mode")]
    InconsistentMode { fn_: f64, ft: f64, phi_dot: f64 },

    #[error("no contact mode is consistent with the imposed pusher motion (penetration {penetration:.3e} m)")]
    NoConsistentMode { penetration: f64 },

    #[error("pusher penetration {depth:.3e} m exceeds the sanity bound {bound:.3e} m")]
    ExcessivePenetration { depth: f64, bound: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver reported infeasible on {:.2}% of steps", .fraction * 100.0)]
    SolverInfeasible { fraction: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, PushError>;

impl From<std::io::Error> for PushError {
    fn from(e: std::io::Error) -> Self {
        PushError::Io(e.to_string())
    }
}

impl From<csv::Error> for PushError {
    fn from(e: csv::Error) -> Self {
        PushError::Io(e.to_string())
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(PushError::InvalidParameter { name, reason: format!("must be finite and > 0, got {value}") })
    }
}
