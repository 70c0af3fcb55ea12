use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("read failed: {0}")]
    Stream(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("missing embedding for node {0}")]
    MissingEmbedding(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] graphex_nn::NnError),
    #[error("step {step} failed: {source}")]
    Step {
        step: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for problems the user fixes in the configuration.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Step { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
