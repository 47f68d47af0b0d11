//! Error types shared across the pipeline.

/// Unified error type for every stage of the pipeline.
///
/// Variants map onto the CLI exit codes: `Config`/`Parse` are user-input
/// problems, `Dependency` means a required upstream artifact is missing or
/// stale, and `Numerical`/`Training` cover non-finite losses and divergence.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("length error: {0}")]
    Length(String),

    /// A caller violated an operation's contract (precondition or schema).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input values outside the operation's domain (e.g. out-of-range ids).
    #[error("domain error: {0}")]
    Domain(String),

    /// The backend cannot perform the requested operation.
    #[error("capability error: {0}")]
    Capability(String),

    /// Degenerate numerical input (zero-norm embedding, zero variance).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A required upstream artifact is missing or its hash does not match.
    #[error("dependency error: {0}")]
    Dependency(String),

    /// Non-finite values in a search or training computation.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Exit code the CLI maps this error to.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Dependency(_) => 3,
            Error::Numerical(_) | Error::Training(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
