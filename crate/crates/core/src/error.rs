//! Shared error type for the core library.

use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by pipeline operations.
///
/// Variants carry enough context to act on: offending ids, paths, the
/// label combination that ran short, the shapes that disagreed.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An input failed a documented precondition.
    Precondition(String),
    /// Invalid experiment or model configuration.
    Config(String),
    /// Duplicate record id while building a manifest.
    DuplicateId(String),
    /// A balanced sample could not be satisfied: combination and deficit.
    SampleDeficit { combination: String, need: usize, have: usize },
    /// Tensor/image shape mismatch: expected vs got, as debug strings.
    ShapeMismatch { expected: String, got: String },
    /// Label value outside the owning schema, or missing label key.
    Label(String),
    /// Synthetic training data overlaps the real test set.
    Leakage { offending_ids: Vec<String> },
    /// File or directory level I/O failure.
    Io { path: PathBuf, message: String },
    /// Malformed manifest, checkpoint or report payload.
    Format(String),
    /// Training diverged (non-finite loss) and was aborted.
    NonFinite(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Precondition(m) => write!(f, "precondition violated: {m}"),
            Error::Config(m) => write!(f, "invalid configuration: {m}"),
            Error::DuplicateId(id) => write!(f, "duplicate record id: {id}"),
            Error::SampleDeficit { combination, need, have } => write!(
                f,
                "insufficient members for combination {combination}: need {need}, have {have}"
            ),
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::Label(m) => write!(f, "label error: {m}"),
            Error::Leakage { offending_ids } => write!(
                f,
                "leakage guard: synthetic records derive from generators trained on test members: {}",
                offending_ids.join(", ")
            ),
            Error::Io { path, message } => write!(f, "io error at {}: {message}", path.display()),
            Error::Format(m) => write!(f, "format error: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl fmt::Display) -> Self {
        Error::Io { path: path.into(), message: err.to_string() }
    }
}
