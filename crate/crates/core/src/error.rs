use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input. `at` is `file:line` (or `file:entry`).
    #[error("{at}: parse error: {msg}")]
    Parse { at: String, msg: String },

    #[error("{at}: unknown {kind} id '{id}'")]
    UnknownId {
        at: String,
        kind: &'static str,
        id: String,
    },

    #[error("{at}: label inconsistency: carotene '{carotene}' is not a child of soc '{soc}'")]
    LabelInconsistency {
        at: String,
        soc: String,
        carotene: String,
    },

    /// Any other violated data invariant (duplicate ids, self-loops, degree cap, ...).
    #[error("{at}: {msg}")]
    Invariant { at: String, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{0}")]
    Training(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invariant(at: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invariant {
            at: at.into(),
            msg: msg.into(),
        }
    }

    /// Short machine-readable tag, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::UnknownId { .. } => "unknown-id",
            Error::LabelInconsistency { .. } => "label-inconsistency",
            Error::Invariant { .. } => "invariant",
            Error::Dimension { .. } => "dimension",
            Error::NonFinite(_) => "non-finite",
            Error::Config(_) => "config",
            Error::Training(_) => "training",
        }
    }
}
