use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("png decode error: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode error: {0}")]
    PngEncode(#[from] png::EncodingError),

    #[error("unsupported png format: {0}")]
    UnsupportedPng(String),

    #[error("bad magic")]
    BadMagic,

    #[error("tensor dims overflow: {0:?}")]
    DimOverflow(Vec<u32>),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unsupported tensor rank {0}; expected 2 (matrix) or 3 (image)")]
    UnsupportedRank(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: x has D={x}, y has D={y}")]
    DimMismatch { x: usize, y: usize },

    #[error("empty feature set")]
    EmptySet,

    #[error("image {height}x{width} is smaller than patch size {patch}")]
    ImageTooSmall {
        height: usize,
        width: usize,
        patch: usize,
    },

    #[error("degenerate row {0}: all distances are zero and epsilon is zero")]
    DegenerateRow(usize),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("origin ({row}, {col}) out of bounds for image {height}x{width} with patch {patch}")]
    OriginOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
        patch: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
