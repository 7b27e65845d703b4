use std::io;

use crate::signal::Domain;

/// Errors produced by the vocoder engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, expected {expected} but got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{0}: non-finite value in input")]
    NonFinite(&'static str),

    #[error("signal domain mismatch: expected {expected:?}, got {actual:?}")]
    DomainMismatch { expected: Domain, actual: Domain },

    #[error("unsupported sample rate {0} Hz (expected 16000)")]
    SampleRate(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),

    #[error("bad magic: expected \"FWGN\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("unexpected end of file")]
    UnexpectedEof,

    #[error("malformed weight file: {0}")]
    Malformed(String),

    #[error("shape error in {tensor}: expected {expected}, found {actual}")]
    Shape {
        tensor: String,
        expected: String,
        actual: String,
    },

    #[error("unknown tensor {0:?}")]
    UnknownTensor(String),

    #[error("malformed feature data: {0}")]
    Features(String),

    #[error("insufficient history: need {needed} samples, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("signal too short: need at least {needed} samples, have {have}")]
    TooShort { needed: usize, have: usize },

    #[error("reference spectrogram is zero while the other signal is not")]
    ZeroReference,

    #[error("no frames are voiced in both signals")]
    NoVoicedOverlap,

    #[error("stream already flushed")]
    Flushed,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dims_err(op: &'static str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::DimensionMismatch {
        op,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
