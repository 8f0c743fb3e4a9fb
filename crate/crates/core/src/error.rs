// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("trailing data: {extra} bytes after payload")]
    TrailingBytes { extra: usize },

    #[error("non-finite activation {value} at (s={s}, p={p}, l={l}, i={i})")]
    NonFinite {
        value: f32,
        s: usize,
        p: usize,
        l: usize,
        i: usize,
    },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("ragged activation vectors: language {language} has {found} neurons, expected {expected}")]
    Ragged {
        language: usize,
        expected: usize,
        found: usize,
    },

    #[error("classification needs at least two languages, got {0}")]
    TooFewLanguages(usize),

    #[error("unknown language tag {0:?}")]
    UnknownLanguage(String),

    #[error("unknown neuron type {0:?}")]
    UnknownType(String),

    #[error("neuron index {index} out of range for layer {layer} (d_m = {d_m})")]
    IndexOutOfRange { index: u64, layer: usize, d_m: usize },

    #[error("sidecar lacks a value matrix")]
    MissingValueMatrix,

    #[error("sidecar lacks an output embedding")]
    MissingEmbedding,

    #[error("token id {id} out of range (vocab = {vocab})")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing baseline accuracy for language {0:?}")]
    MissingBaseline(String),

    #[error("zero baseline accuracy for language {0:?}")]
    ZeroBaseline(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
