use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error at {item}: {reason}")]
    Format { item: String, reason: String },

    #[error("combination weights violate constraints: {0}")]
    Weights(#[from] crate::weights::WeightViolation),

    #[error("not mean-square stable: spectral radius {spectral_radius}")]
    NotStable { spectral_radius: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(item: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            item: item.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
