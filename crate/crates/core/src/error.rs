use thiserror::Error;

/// Errors raised anywhere in the folding toolkit.
///
/// The variants map one-to-one onto the CLI exit-code classes (see
/// [`FoldError::exit_code`]).
#[derive(Debug, Error)]
pub enum FoldError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FoldError {
    pub fn shape(msg: impl Into<String>) -> Self {
        FoldError::Shape(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        FoldError::Domain(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        FoldError::Argument(msg.into())
    }

    pub fn configuration(msg: impl Into<String>) -> Self {
        FoldError::Configuration(msg.into())
    }

    pub fn capacity(msg: impl Into<String>) -> Self {
        FoldError::Capacity(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        FoldError::Format {
            offset,
            message: msg.into(),
        }
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        FoldError::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Process exit code for this error class: 2 argument, 3 format,
    /// 4 capacity, 5 numerical/domain, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            FoldError::Shape(_) | FoldError::Argument(_) | FoldError::Configuration(_) => 2,
            FoldError::Format { .. } | FoldError::Parse { .. } => 3,
            FoldError::Capacity(_) => 4,
            FoldError::Domain(_) => 5,
            FoldError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, FoldError>;
