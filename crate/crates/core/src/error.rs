use std::io;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid long-tail profile: {0}")]
    Profile(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("corrupted file: {0}")]
    Corruption(String),
    #[error("synthetic pool underflow: class {class} needs {needed}, pool has {available}")]
    Pool {
        class: usize,
        needed: usize,
        available: usize,
    },
    #[error("model error: {0}")]
    Model(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
