use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("byte offset {position}: {reason}")]
    NotRepresentable { position: usize, reason: String },

    #[error("token {position}: id {token} has zero quantized frequency (infinite code length)")]
    ZeroFrequency { position: usize, token: u32 },

    #[error("token id {token} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: usize },

    #[error("cannot give {vocab_size} symbols a nonzero slot at precision {precision} bits")]
    PrecisionTooLow { vocab_size: usize, precision: u32 },

    #[error("probabilities sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },

    #[error("trace exhausted at position {position} (trace holds {len} records)")]
    TraceExhausted { position: usize, len: usize },

    #[error("trace line {line}: {reason}")]
    TraceFormat { line: usize, reason: String },

    #[error("corrupt bitstream at token {position}: {reason}")]
    Corrupt { position: usize, reason: String },

    #[error("coder `{0}` does not produce a concrete bitstream")]
    NoBitstream(String),

    #[error("deflate codec: {0}")]
    Codec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
