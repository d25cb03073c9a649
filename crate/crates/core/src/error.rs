use std::fmt;
use std::path::PathBuf;

use crate::grid::Shape;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    Dimension { left: Shape, right: Shape },

    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("SGM parse error at byte {offset}: {kind}")]
    Sgm { offset: u64, kind: SgmErrorKind },

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("manifest line {line}: duplicate subject id {id:?}")]
    DuplicateSubject { line: usize, id: String },

    #[error("subject {subject}: {source}")]
    Subject {
        subject: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn in_subject(self, subject: &str) -> Self {
        Error::Subject {
            subject: subject.to_string(),
            source: Box::new(self),
        }
    }
}

/// What went wrong while decoding an SGM byte stream.
#[derive(Debug, Clone, PartialEq)]
pub enum SgmErrorKind {
    BadMagic,
    BadHeader(String),
    ShortPayload { expected: u64, actual: u64 },
    TrailingBytes { count: u64 },
    OutOfRange { value: f32 },
    NonFinite,
    NotBinary { value: u8 },
    DtypeMismatch { expected: &'static str, found: &'static str },
}

impl fmt::Display for SgmErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SgmErrorKind::BadMagic => write!(f, "bad magic (expected \"SGM1\")"),
            SgmErrorKind::BadHeader(msg) => write!(f, "bad header: {msg}"),
            SgmErrorKind::ShortPayload { expected, actual } => {
                write!(f, "short payload: expected {expected} bytes, found {actual}")
            }
            SgmErrorKind::TrailingBytes { count } => {
                write!(f, "{count} trailing byte(s) after payload")
            }
            SgmErrorKind::OutOfRange { value } => write!(f, "score {value} outside [0, 1]"),
            SgmErrorKind::NonFinite => write!(f, "non-finite value"),
            SgmErrorKind::NotBinary { value } => write!(f, "mask value {value} not in {{0, 1}}"),
            SgmErrorKind::DtypeMismatch { expected, found } => {
                write!(f, "dtype {found} where {expected} was expected")
            }
        }
    }
}
