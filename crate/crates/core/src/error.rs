use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The bytes on disk do not follow the declared layout.
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input carrying values we refuse (NaN, duplicate labels, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("collection is empty")]
    EmptyCollection,

    #[error("row {row} has zero norm and cannot be normalized")]
    DegenerateVector { row: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("collection has {count} point(s); at least 2 are required")]
    CollectionTooSmall { count: usize },

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("labels contain a single class; AUC is undefined")]
    DegenerateLabels,

    #[error("no rated label has a score")]
    NoCoverage,

    #[error("query {label:?}")]
    Query {
        label: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
