use std::path::PathBuf;

use thiserror::Error;

use crate::optim::TraceRow;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input too small: {height}x{width}, network needs at least {min}x{min}")]
    InputTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    AtPath {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{}:{line}: {message}", path.display())]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed image header: {0}")]
    MalformedHeader(String),

    #[error("truncated image payload: expected {expected} bytes, found {found}")]
    TruncatedImage { expected: usize, found: usize },

    #[error("image and mask dimensions differ: image {image:?}, mask {mask:?}")]
    DimensionMismatch {
        image: (usize, usize),
        mask: (usize, usize),
    },

    #[error("target is not binary at index {index}: {value}")]
    NonBinaryTarget { index: usize, value: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iteration}: {message}")]
    Diverged {
        iteration: usize,
        message: String,
        trace: Vec<TraceRow>,
    },

    #[error("not a model file (bad magic {0:?})")]
    BadMagic([u8; 4]),

    #[error("unsupported model file version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("model file checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("model file layout mismatch: {0}")]
    LayoutMismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a file path unless the error already names one.
    pub fn at_path(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::AtPath { .. } | Error::Manifest { .. }) => e,
            e => Error::AtPath {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, looking through [`Error::AtPath`].
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPath { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
