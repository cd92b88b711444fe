use thiserror::Error;

/// Errors produced by every fallible operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input bytes do not follow the container layout they claim.
    #[error("format error: {0}")]
    Format(String),

    /// Input is well-formed but uses a variant this crate does not read.
    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// More instances were requested than there are salient superpixels.
    #[error("requested {requested} instances but only {feasible} salient superpixels are available")]
    InstanceCount { requested: usize, feasible: usize },

    #[error("could not place {count} non-overlapping shapes after {attempts} attempts")]
    Placement { count: usize, attempts: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
