use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("audio file not found: {0}")]
    AudioNotFound(PathBuf),
    #[error("unsupported codec (format tag {format_tag}, {bits} bits); expected 16-bit PCM or 32-bit float")]
    UnsupportedCodec { format_tag: u16, bits: u16 },
    #[error("audio data chunk is empty")]
    EmptyAudio,
    #[error("sample rate {0} Hz is not 44100 Hz; pass the resample flag to convert")]
    NonStandardSampleRate(u32),
    #[error("malformed wav: {0}")]
    MalformedWav(String),
    #[error("no .wav files found under {0}")]
    EmptyCorpus(PathBuf),
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("matrix length mismatch: expected {expected} bytes, found {found}")]
    MatrixLengthMismatch { expected: usize, found: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("buffer has {len} samples, fewer than one analysis window ({window})")]
    BufferTooShort { len: usize, window: usize },
    #[error("need at least {needed} items, got {got}")]
    NotEnoughData { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: &'static str, message: String },
    #[error("unsupported trigger mode `{0}`")]
    UnsupportedTriggerMode(String),
    #[error("all feature weights are zero")]
    ZeroWeights,
    #[error("model is not trained")]
    Untrained,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Stable machine-readable code, used in CLI exit messages and protocol errors.
    pub fn code(&self) -> &'static str {
        match self {
            Error::AudioNotFound(_) => "audio_not_found",
            Error::UnsupportedCodec { .. } => "unsupported_codec",
            Error::EmptyAudio => "empty_audio",
            Error::NonStandardSampleRate(_) => "non_standard_sample_rate",
            Error::MalformedWav(_) => "malformed_wav",
            Error::EmptyCorpus(_) => "empty_corpus",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::MatrixLengthMismatch { .. } => "matrix_length_mismatch",
            Error::InvalidModel(_) => "invalid_model",
            Error::BufferTooShort { .. } => "buffer_too_short",
            Error::NotEnoughData { .. } => "not_enough_data",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::UnsupportedTriggerMode(_) => "unsupported_trigger_mode",
            Error::ZeroWeights => "zero_weights",
            Error::Untrained => "untrained",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            message: message.into(),
        }
    }
}
