use thiserror::Error;

#[derive(Debug, Error)]
pub enum GadError {
    /// Non-finite input or a parameter outside the loss family's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid ensemble sample: {0}")]
    InvalidSample(String),

    #[error("loss family `{0}` is not supported by this operation")]
    UnsupportedFamily(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("no values left after excluding undefined entries")]
    EmptyAfterExclusion,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = GadError> = std::result::Result<T, E>;

impl GadError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        GadError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors that stem from loss-domain violations rather than
    /// malformed input or I/O.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            GadError::Domain(_) | GadError::UnsupportedFamily(_) | GadError::Precondition(_)
        )
    }
}
