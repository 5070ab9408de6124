use std::io;

use thiserror::Error;

/// Errors raised by the simulator and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical blow-up at step {step}: {detail}")]
    NumericalBlowup { step: usize, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Broad classes used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_)
            | Error::Capacity(_)
            | Error::Dimension(_)
            | Error::InvalidInput(_)
            | Error::InvalidState(_)
            | Error::Degenerate(_)
            | Error::Config(_) => ErrorClass::Validation,
            Error::NumericalBlowup { .. } | Error::Numerical(_) => ErrorClass::Numerical,
            Error::Format { .. } | Error::Io(_) => ErrorClass::Io,
        }
    }

    /// Process exit code: 1 validation, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 1,
            ErrorClass::Numerical => 2,
            ErrorClass::Io => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
