//! The lab around the core: persistence formats, configuration layering,
//! plotting, a worker pool, and the five pipeline commands (`gen-data`,
//! `train`, `fit`, `analyze`, `report`).
//!
//! Everything here is deliberately deterministic: identical configuration
//! and seed produce byte-identical artifacts, including the SVGs.

pub mod checkpoints;
pub mod commands;
pub mod config;
pub mod csvout;
pub mod dataset;
pub mod svg;
pub mod textio;
pub mod workers;

use thiserror::Error;

/// Lab-level failure, carrying enough context to print a one-line
/// diagnosis and to choose the process exit code.
#[derive(Debug, Error)]
pub enum LabError {
    /// Bad configuration or command-line usage.
    #[error("{0}")]
    Config(String),
    /// Filesystem trouble, tagged with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// A persisted artifact failed to parse.
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    /// The computational core rejected inputs or blew up numerically.
    #[error(transparent)]
    Core(#[from] nerd_core::Error),
    /// Training aborted for the listed subjects (artifacts were kept).
    #[error("training failed for {}", .0.join(", "))]
    Training(Vec<String>),
    /// Analysis finished but had to skip the listed sections.
    #[error("analysis skipped: {}", .0.join("; "))]
    Partial(Vec<String>),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    /// Process exit code contract: 0 success, 1 user error, 2 numeric
    /// failure, 3 partial analysis.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Io { .. } | LabError::Parse { .. } => 1,
            LabError::Core(nerd_core::Error::NumericFailure { .. }) => 2,
            LabError::Core(_) => 1,
            LabError::Training(_) => 2,
            LabError::Partial(_) => 3,
        }
    }
}

/// Attach a path to an I/O error.
pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> LabError {
    LabError::Io { path: path.display().to_string(), source }
}
