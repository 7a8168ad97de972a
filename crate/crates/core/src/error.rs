use std::path::PathBuf;

/// Errors produced anywhere in the graph-construction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file or in-memory text failed to parse. `line` is 1-based; 0 means
    /// the problem is not tied to a single line.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("cycle detected in ontology: {0}")]
    Cycle(String),
    #[error("unknown term `{0}`")]
    UnknownTerm(String),
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("empty feature space: no genes survive filtering")]
    EmptyFeatureSpace,
    #[error("no cells survive filtering")]
    NoCellsSurvive,
    #[error("internal error: {0}")]
    Internal(String),
    /// Failure inside a named pipeline stage.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Internal,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Internal(_) => ErrorKind::Internal,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
