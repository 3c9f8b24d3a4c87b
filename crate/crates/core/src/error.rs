use std::io;

use thiserror::Error;

/// Errors produced anywhere in the codec, model, or training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,

    #[error("sample rate {0} Hz is not supported (expected 48000 Hz)")]
    SampleRate(u32),

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("signal length {got} does not match window sequence coverage {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid window sequence: {0}")]
    InvalidSequence(String),

    #[error("frame {index}: {reason}")]
    FrameMismatch { index: usize, reason: String },

    #[error("truncated code")]
    TruncatedCode,

    #[error("not an MDCN stream")]
    BadMagic,

    #[error("unsupported stream version {0}")]
    BadVersion(u8),

    #[error("truncated stream at frame {0}")]
    TruncatedStream(usize),

    #[error("truncated stream header")]
    TruncatedHeader,

    #[error("corrupt window sequence at frame {0}")]
    CorruptWindowSequence(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
