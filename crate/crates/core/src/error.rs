use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LbseError>;

/// Every failure the library can report. Each variant has a stable
/// machine-readable code, see [`LbseError::code`].
#[derive(Debug, Error)]
pub enum LbseError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u8, expected: u8 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at feature row {row}, sample {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid number {text:?} on line {line}")]
    InvalidNumber { line: usize, text: String },

    #[error("label {label} out of range for {num_classes} classes (sample {sample})")]
    LabelOutOfRange {
        sample: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("index ({i}, {j}) out of range for {n} samples")]
    IndexOutOfRange { i: usize, j: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("singular value decomposition did not converge")]
    SvdFailed,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("rank degeneracy: {0}")]
    RankDegenerate(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

impl LbseError {
    pub fn code(&self) -> &'static str {
        match self {
            LbseError::Io(_) => "E_IO",
            LbseError::MalformedHeader(_) => "E_MALFORMED_HEADER",
            LbseError::UnsupportedVersion { .. } => "E_UNSUPPORTED_VERSION",
            LbseError::DimensionMismatch(_) => "E_DIMENSION_MISMATCH",
            LbseError::NonFinite { .. } => "E_NON_FINITE",
            LbseError::InvalidNumber { .. } => "E_INVALID_NUMBER",
            LbseError::LabelOutOfRange { .. } => "E_LABEL_OUT_OF_RANGE",
            LbseError::DegenerateSplit(_) => "E_DEGENERATE_SPLIT",
            LbseError::IndexOutOfRange { .. } => "E_INDEX_OUT_OF_RANGE",
            LbseError::InvalidConfig(_) => "E_CONFIG",
            LbseError::SvdFailed => "E_SVD",
            LbseError::Singular(_) => "E_SINGULAR",
            LbseError::RankDegenerate(_) => "E_RANK_DEGENERATE",
            LbseError::EmptyIndex => "E_EMPTY_INDEX",
            LbseError::LengthMismatch(_) => "E_LENGTH_MISMATCH",
        }
    }
}
