use std::io;

use thiserror::Error;

/// Errors produced anywhere in the codec.
#[derive(Debug, Error)]
pub enum CodecError {
    #[error("symbol {symbol} outside alphabet [{min}, {max}]")]
    AlphabetRange { symbol: i32, min: i32, max: i32 },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("symbol {symbol} has zero width in its table, cannot be coded")]
    CodingInfeasible { symbol: usize },

    #[error("range decoder ran past the end of the payload")]
    StreamExhausted,

    #[error("corrupt stream: {0}")]
    Corrupt(String),

    #[error("weights do not match the container (expected checksum {expected:016x}, got {actual:016x})")]
    WeightMismatch { expected: u64, actual: u64 },

    #[error("bad weight file: {0}")]
    BadWeights(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("image format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;
