//! Crate-wide error type.

use thiserror::Error;

use crate::geometry::Frame;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive depth: {depth} mm")]
    NonPositiveDepth { depth: f64 },

    #[error("frame mismatch: expected {expected:?}, found {found:?}")]
    FrameMismatch { expected: Frame, found: Frame },

    #[error("joint count mismatch: {left} vs {right}")]
    JointCountMismatch { left: usize, right: usize },

    #[error("sequence length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "Newton inversion did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("distorted radius {radius:.6} outside the monotone model range (max {max:.6})")]
    OutOfModelRange { radius: f64, max: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("infeasible camera rig: {0}")]
    InfeasibleRig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invariant violation for record {key}: {message}")]
    InvariantViolation { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code category used by the CLI: usage=2, io=3, data=4, numeric=5.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::Parse { .. }
            | Error::InvariantViolation { .. }
            | Error::InvalidParams(_)
            | Error::FrameMismatch { .. }
            | Error::JointCountMismatch { .. }
            | Error::LengthMismatch { .. }
            | Error::DimensionMismatch(_) => 4,
            Error::NonPositiveDepth { .. }
            | Error::NoConvergence { .. }
            | Error::OutOfModelRange { .. }
            | Error::InfeasibleRig(_) => 5,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_categories() {
        assert_eq!(Error::Io(std::io::Error::other("x")).exit_code(), 3);
        assert_eq!(
            Error::Parse {
                line: 1,
                message: "m".into()
            }
            .exit_code(),
            4
        );
        assert_eq!(Error::InvalidParams("p".into()).exit_code(), 4);
        assert_eq!(Error::NonPositiveDepth { depth: 0.0 }.exit_code(), 5);
        assert_eq!(
            Error::NoConvergence {
                iterations: 50,
                residual: 1.0
            }
            .exit_code(),
            5
        );
        assert_eq!(Error::InfeasibleRig("r".into()).exit_code(), 5);
    }
}
