use thiserror::Error;

use crate::feasible::Violation;

#[derive(Debug, Error)]
pub enum DsmError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// `p''` (or the Jacobian scale) diverges at a zero-load slot.
    #[error("singular evaluation at slot {slot}: {reason}")]
    Singular { slot: usize, reason: String },

    #[error("invalid consumer spec: {0}")]
    InvalidSpec(Violation),

    #[error("communication graph is not connected")]
    Disconnected,

    #[error("no convergence within {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DsmError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        DsmError::InvalidArgument(msg.into())
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(DsmError::LengthMismatch {
                what,
                expected,
                got,
            })
        }
    }
}

pub type Result<T> = std::result::Result<T, DsmError>;
