use thiserror::Error;

/// Failure modes of a run, each mapped to a distinct exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] amoments::Error),
    #[error("chunk {index} [{lo}, {hi}) failed: {message}")]
    Chunk {
        index: usize,
        lo: u64,
        hi: u64,
        message: String,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 1 for failed computations, 2 for bad input, 3 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(_) => 2,
            CliError::Chunk { .. } => 1,
            CliError::Io { .. } => 3,
        }
    }
}
