use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("signal too short: need at least {needed} samples, got {got}")]
    SignalTooShort { needed: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("frame grid mismatch: {0}")]
    GridMismatch(String),
    #[error("spectral envelope must be strictly positive (frame {frame}, bin {bin})")]
    NonPositiveEnvelope { frame: usize, bin: usize },
    #[error("acoustic analysis has no frames")]
    EmptyAnalysis,

    #[error("empty sequence")]
    EmptySequence,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at epoch {epoch}, example {example}")]
    NonFiniteLoss { epoch: usize, example: usize },

    #[error("label length mismatch for {utterance}: {labels} labels vs {frames} feature frames")]
    LabelLengthMismatch { utterance: String, labels: usize, frames: usize },
    #[error("manifest has no entries")]
    EmptyManifest,
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("frame grid mismatch of {difference} frames exceeds tolerance ({posteriors} posterior frames vs {acoustic} acoustic frames)")]
    FrameGridMismatch { posteriors: usize, acoustic: usize, difference: usize },
    #[error("model dimension mismatch: {0}")]
    ModelDimMismatch(String),

    #[error("manifest line {line}: missing file {path}")]
    MissingFile { line: usize, path: PathBuf },
    #[error("manifest line {line}: duplicate entry {path}")]
    DuplicateEntry { line: usize, path: PathBuf },
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("config error: {0}")]
    Config(String),
}
