//! Error taxonomy for the binary: user errors (bad config, bad data, bad
//! flags) exit 1, internal errors exit 2. Both print exactly one line with
//! a machine-parseable prefix.

use std::fmt;

use hedgecast_core::corpus::synth::SynthError;
use hedgecast_core::corpus::CorpusError;
use hedgecast_core::encoding::EncodeError;
use hedgecast_core::eval::EvalError;
use hedgecast_core::explain::ExplainError;
use hedgecast_core::models::ModelError;
use hedgecast_core::resample::ResampleError;

#[derive(Debug, Clone, PartialEq)]
pub enum AppError {
    User(String),
    Internal(String),
}

pub fn user(msg: impl Into<String>) -> AppError {
    AppError::User(msg.into())
}

pub fn internal(msg: impl Into<String>) -> AppError {
    AppError::Internal(msg.into())
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::User(_) => 1,
            AppError::Internal(_) => 2,
        }
    }
}

/// Collapses a possibly multi-line message into the single output line.
fn one_line(msg: &str) -> String {
    msg.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("; ")
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            AppError::User(m) => write!(f, "error[user]: {}", one_line(m)),
            AppError::Internal(m) => write!(f, "error[internal]: {}", one_line(m)),
        }
    }
}

impl From<CorpusError> for AppError {
    fn from(e: CorpusError) -> Self {
        user(e.to_string())
    }
}

impl From<SynthError> for AppError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) => user(e.to_string()),
            SynthError::Internal(_) => internal(e.to_string()),
        }
    }
}

impl From<EncodeError> for AppError {
    fn from(e: EncodeError) -> Self {
        user(e.to_string())
    }
}

impl From<ModelError> for AppError {
    fn from(e: ModelError) -> Self {
        user(e.to_string())
    }
}

impl From<ResampleError> for AppError {
    fn from(e: ResampleError) -> Self {
        user(e.to_string())
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match e {
            // A prediction/label length drift can only come from a bug, not
            // from anything the user wrote.
            EvalError::LengthMismatch { .. } => internal(e.to_string()),
            other => user(other.to_string()),
        }
    }
}

impl From<ExplainError> for AppError {
    fn from(e: ExplainError) -> Self {
        user(e.to_string())
    }
}

/// IO with the offending path attached.
pub fn io_err(path: &std::path::Path, e: std::io::Error) -> AppError {
    user(format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_are_single_lines_with_prefix() {
        let e = user("first\n  second\n\nthird");
        assert_eq!(e.to_string(), "error[user]: first; second; third");
        assert_eq!(e.exit_code(), 1);
        let e = internal("boom");
        assert_eq!(e.to_string(), "error[internal]: boom");
        assert_eq!(e.exit_code(), 2);
    }
}
