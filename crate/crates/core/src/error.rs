use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("weight file has bad magic bytes")]
    BadMagic,

    #[error("unsupported weight file version {0:?}")]
    UnsupportedVersion(String),

    #[error("weight file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("weight file is malformed: {0}")]
    Malformed(String),

    #[error("tensor {name:?} has unsupported dtype code {code}")]
    UnsupportedDtype { name: String, code: u8 },

    #[error("missing tensor {0:?}")]
    MissingTensor(String),

    #[error("unknown tensor {0:?}")]
    UnknownTensor(String),

    #[error("tensor {name:?} has shape {found:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("weight store is empty")]
    EmptyStore,

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("sequence error: {0}")]
    Sequence(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
