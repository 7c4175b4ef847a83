use thiserror::Error;

/// Errors raised by tensor construction, the operator library, and the
/// checkpoint archive. Shape errors always name both offending shapes.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("tensor of shape {rows}x{cols} needs {}, got {len} values", rows * cols)]
    LengthMismatch { rows: usize, cols: usize, len: usize },

    #[error("softmax: every entry along axis {axis} at index {index} is -inf; the distribution is undefined")]
    DegenerateSoftmax { axis: usize, index: usize },

    #[error("backward requires a scalar loss, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("{op}: {msg}")]
    Contract { op: &'static str, msg: String },

    #[error("parameter {0:?} registered twice")]
    DuplicateParam(String),

    #[error("no parameter named {0:?}")]
    UnknownParam(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),

    #[error("checkpoint manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

impl TensorError {
    /// Shorthand for a named-contract violation.
    pub fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        TensorError::Contract {
            op,
            msg: msg.into(),
        }
    }
}
