use thiserror::Error;

/// Errors surfaced by the library and mapped to CLI exit codes.
#[derive(Debug, Error)]
pub enum OakError {
    /// Invalid configuration or arguments (CLI exit code 2).
    #[error("configuration error: {0}")]
    Config(String),

    /// Underlying I/O failure (CLI exit code 3).
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Unparseable input data (CLI exit code 3). `line` is 1-based and
    /// counts the header row of a CSV file as line 1.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Numerical failure such as a Cholesky breakdown (CLI exit code 4).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Invalid value passed to a library operation (CLI exit code 2).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Dimension or shape mismatch between operands (CLI exit code 2).
    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl OakError {
    /// Process exit code for this error: 2 config, 3 I/O or parse, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            OakError::Config(_) | OakError::Invalid(_) | OakError::Shape(_) => 2,
            OakError::Io(_) | OakError::Parse { .. } => 3,
            OakError::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, OakError>;
