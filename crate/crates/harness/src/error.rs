use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("pgm at byte {offset}: {message}")]
    Pgm { offset: usize, message: String },

    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("image: {0}")]
    Image(String),

    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Core(#[from] dcs_core::Error),

    #[error("{variant} at rate {rate} trial {trial}: {source}")]
    Cell {
        variant: String,
        rate: f64,
        trial: usize,
        source: dcs_core::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
