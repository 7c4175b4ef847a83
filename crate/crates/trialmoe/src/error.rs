//! Crate-wide error type with process exit-code classification.
//!
//! The CLI maps every failure onto one of three exit classes:
//!   1 — command-line usage errors (handled at the argument-parsing layer),
//!   2 — data, configuration, I/O, or model-shape errors,
//!   3 — numeric aborts (a non-finite loss during training).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A line of an input file failed to parse.
    #[error("{path}:{line}: {msg}")]
    DataParse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A dataset (or split) ended up with no records.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A record violates a documented invariant (bad label, blank id, ...).
    #[error("invalid record {id:?}: {msg}")]
    InvalidRecord { id: String, msg: String },

    /// Configuration value out of range or inconsistent.
    #[error("config: {0}")]
    Config(String),

    /// Language-model client failure (transport, cassette miss, bad payload).
    #[error("llm: {0}")]
    Llm(#[from] crate::data::llm::LlmError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure outside line-oriented readers.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// Tensor-level failure (shape mismatch, checkpoint corruption, ...).
    #[error("tensor: {0}")]
    Tensor(#[from] autograd::TensorError),

    /// A metric was requested on inputs where it is undefined.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// Training produced a non-finite loss; diagnostics were dumped and the
    /// run stopped without touching parameters further.
    #[error(
        "non-finite loss at epoch {epoch}, step {step} \
         (classification={loss_c}, consistency={loss_con}, auxiliary={loss_aux}); \
         diagnostics written to {dump}"
    )]
    NumericAbort {
        epoch: usize,
        step: usize,
        loss_c: f64,
        loss_con: f64,
        loss_aux: f64,
        dump: String,
    },
}

impl Error {
    /// Process exit code for this failure. Usage errors never reach this
    /// type; they are emitted by the argument parser with code 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericAbort { .. } => 3,
            _ => 2,
        }
    }

    /// Convenience constructor for parse failures with file/line context.
    pub fn parse(path: &std::path::Path, line: usize, msg: impl std::fmt::Display) -> Self {
        Error::DataParse {
            path: path.display().to_string(),
            line,
            msg: msg.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_abort_maps_to_exit_three_others_to_two() {
        let abort = Error::NumericAbort {
            epoch: 1,
            step: 2,
            loss_c: f64::NAN,
            loss_con: 0.0,
            loss_aux: 0.0,
            dump: "out/abort.json".into(),
        };
        assert_eq!(abort.exit_code(), 3);
        assert_eq!(Error::EmptyDataset("train".into()).exit_code(), 2);
        assert_eq!(Error::Config("bad".into()).exit_code(), 2);
    }

    #[test]
    fn parse_error_carries_path_and_line() {
        let e = Error::parse(std::path::Path::new("data.jsonl"), 7, "bad phase");
        assert_eq!(e.to_string(), "data.jsonl:7: bad phase");
    }
}
