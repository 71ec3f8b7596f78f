use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or malformed image: {0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("insufficient training data: {0}")]
    InsufficientData(String),
    #[error("image {width}x{height} is smaller than the {min_w}x{min_h} template")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_w: usize,
        min_h: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no ground truth boxes to evaluate against")]
    NoGroundTruth,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("plane is constant; cannot derive thresholds")]
    DegeneratePlane,
    #[error("unsupported file version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short name of the variant, used for machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Format(_) => "FormatError",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::OutOfBounds(_) => "OutOfBounds",
            Error::InsufficientData(_) => "InsufficientData",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::Parse { .. } => "ParseError",
            Error::NoGroundTruth => "NoGroundTruth",
            Error::EmptyInput(_) => "EmptyInput",
            Error::DegeneratePlane => "DegeneratePlane",
            Error::UnsupportedVersion { .. } => "UnsupportedVersion",
            Error::Json(_) => "JsonError",
            Error::Config(_) => "ConfigError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
