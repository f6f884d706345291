use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("unsupported image format for {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("image has a zero dimension ({height}x{width})")]
    ZeroDimension { height: usize, width: usize },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    WindowTooLarge {
        height: usize,
        width: usize,
        window: usize,
    },

    #[error("no measurable pixels (all counts are zero)")]
    NoMeasurablePixels,

    #[error("label {label} out of range at pixel {pixel}")]
    LabelOutOfRange { label: u8, pixel: usize },

    #[error("invalid class table: {0}")]
    InvalidClassTable(String),

    #[error("frame window too short: {kind} needs {needed} frames, got {got}")]
    WindowTooShort {
        kind: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("no external prediction for frame index {0}")]
    MissingPrediction(u64),

    #[error("sequence of {got} frames is too short for window length {window}")]
    SequenceTooShort { got: usize, window: usize },

    #[error("degenerate geometry: image height must be at least 2 for row weighting")]
    DegenerateGeometry,

    #[error("empty score series")]
    EmptySeries,

    #[error("threshold {0} is outside the open interval (0, 1)")]
    InvalidThreshold(f64),

    #[error("missing mask for frame index {0}")]
    MissingMask(u64),

    #[error("shape drift at frame index {index}: expected {expected}, got {got}")]
    ShapeDrift {
        index: u64,
        expected: String,
        got: String,
    },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
