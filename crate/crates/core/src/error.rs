use thiserror::Error;

/// Errors raised across the library.
///
/// Variants fall into two broad categories that the command-line front end
/// maps onto exit codes: data problems (malformed input, schema violations,
/// inconsistent annotations, bad arguments) and compute problems (non-finite
/// values, oversize enumeration).
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate temporal span: {0}")]
    DegenerateSpan(String),

    #[error("graph construction error: {0}")]
    Construction(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("state space too large: {0}")]
    Capacity(String),

    #[error("agreement undefined: {0}")]
    UndefinedAgreement(String),
}

impl Error {
    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_compute(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Capacity(_))
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
