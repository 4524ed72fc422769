use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no text encoder configured and prompt {0:?} is not in the query lookup")]
    EncoderUnavailable(String),

    #[error("encoder request failed: {0}")]
    Encoder(String),

    #[error("{path}: bad magic (expected {expected:?})")]
    BadMagic { path: PathBuf, expected: String },

    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("{path}: truncated at byte offset {offset}")]
    Truncated { path: PathBuf, offset: u64 },

    #[error("{path}: length footer mismatch (footer says {expected} bytes, found {found})")]
    LengthMismatch { path: PathBuf, expected: u64, found: u64 },

    #[error("{path}: dimension mismatch at {key}: expected {expected}, found {found}")]
    DimensionMismatch {
        path: PathBuf,
        key: String,
        expected: usize,
        found: usize,
    },

    #[error("{path}: frame {frame} label map has value {value} outside [0, {max}]")]
    LabelOutOfRange {
        path: PathBuf,
        frame: usize,
        value: u32,
        max: u32,
    },

    #[error("{path}: row {row} of {key} is not unit norm (norm {norm})")]
    NotUnitNorm {
        path: PathBuf,
        key: String,
        row: usize,
        norm: f64,
    },

    #[error("{path}: duplicate label {label:?}")]
    DuplicateLabel { path: PathBuf, label: String },

    #[error("{path}: referenced file {missing} does not exist")]
    MissingFile { path: PathBuf, missing: PathBuf },

    #[error("{path}: malformed at {key}: {message}")]
    Malformed {
        path: PathBuf,
        key: String,
        message: String,
    },

    #[error("{path}: image error: {message}")]
    Image { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable name for the error variant, used by the CLI, the HTTP
    /// service and the C bindings.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Config(_) => "config",
            Error::EncoderUnavailable(_) => "encoder_unavailable",
            Error::Encoder(_) => "encoder",
            Error::BadMagic { .. } => "bad_magic",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::Truncated { .. } => "truncated",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::NotUnitNorm { .. } => "not_unit_norm",
            Error::DuplicateLabel { .. } => "duplicate_label",
            Error::MissingFile { .. } => "missing_file",
            Error::Malformed { .. } => "malformed",
            Error::Image { .. } => "image",
            Error::Io { .. } => "io",
        }
    }
}
