use std::io;

use thiserror::Error;

/// Errors produced by the tracking toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("no consensus: best inlier fraction {fraction:.3} below {required:.3}")]
    NoConsensus { fraction: f64, required: f64 },
    #[error("point maps to infinity under homography")]
    PointAtInfinity,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("extent must be positive, got {0}x{1}")]
    NonPositiveExtent(f64, f64),
    #[error("template has zero intensity variance")]
    ZeroVarianceTemplate,
    #[error("template {template:?} larger than patch {patch:?}")]
    TemplateLargerThanPatch {
        template: (usize, usize),
        patch: (usize, usize),
    },
    #[error("initialization box is outside the frame or degenerate")]
    BoxOutOfBounds,
    #[error("session is not initialized")]
    NotInitialized,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("scenario error: {0}")]
    Spec(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
