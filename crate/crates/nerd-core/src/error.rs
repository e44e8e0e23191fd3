//! Error type shared by every module in the core.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by the computational core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied value violated a precondition (shape mismatch,
    /// non-finite input, out-of-range hyperparameter, ...).
    InvalidArgument(String),
    /// Input was structurally fine but carries no usable signal
    /// (zero-variance vector, empty set, ...).
    DegenerateInput(String),
    /// The regression design matrix is rank deficient.
    SingularDesign,
    /// Too few observations for the requested model.
    InsufficientData { rows: usize, cols: usize },
    /// A computation produced a non-finite value; `step` identifies where
    /// (denoising step, Lloyd iteration, Jacobi sweep — whatever the op
    /// counts in).
    NumericFailure { step: usize, detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DegenerateInput(msg) => write!(f, "degenerate input: {msg}"),
            Error::SingularDesign => write!(f, "singular design matrix"),
            Error::InsufficientData { rows, cols } => {
                write!(f, "insufficient data: {rows} rows for {cols} columns")
            }
            Error::NumericFailure { step, detail } => {
                write!(f, "numeric failure at step {step}: {detail}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

/// Shorthand used across the crate for precondition failures.
pub(crate) fn invalid(msg: impl fmt::Display) -> Error {
    Error::InvalidArgument(alloc::format!("{msg}"))
}

/// Shorthand for degenerate-input failures.
pub(crate) fn degenerate(msg: impl fmt::Display) -> Error {
    Error::DegenerateInput(alloc::format!("{msg}"))
}
