use std::path::PathBuf;
use thiserror::Error;

/// CLI-level errors. Exit codes: input problems map to 2, degenerate
/// statistics to 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Lib(#[from] ecmmd::Error),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("missing column {name:?} in {path}")]
    MissingColumn { path: PathBuf, name: String },

    #[error("non-numeric cell at row {row}, column {column:?}: {value:?}")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column {column:?}")]
    NonFiniteCell { row: usize, column: String },

    #[error("ragged row {row}: {got} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("invalid argument: {0}")]
    BadArgument(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_degenerate() => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
