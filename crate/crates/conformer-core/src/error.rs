//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by tensor kernels, model construction, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two operands have incompatible shapes.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A single-operand dimension constraint was violated.
    #[error("dimension error in {op}: {msg}")]
    Dimension { op: &'static str, msg: String },

    /// Invalid configuration value or unparsable config file.
    #[error("config error: {0}")]
    Config(String),

    /// An API contract was violated (e.g. non-scalar loss passed to backward).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A non-finite value was produced.
    #[error("numeric error: non-finite value in {op}")]
    NonFinite { op: &'static str },

    /// Malformed file content (WAV header, tensor container, ...).
    #[error("format error in {field}: {msg}")]
    Format { field: String, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dimension(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            msg: msg.into(),
        }
    }

    pub fn format(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
