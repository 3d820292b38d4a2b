//! Error type shared by all modules.

use std::path::PathBuf;

/// Result alias using [`Error`].
pub type Result<T> = std::result::Result<T, Error>;

/// Which side of a prediction/ground-truth pair a problem refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSide {
    /// The predicted mask.
    Prediction,
    /// The ground-truth mask.
    GroundTruth,
    /// Both masks.
    Both,
}

impl std::fmt::Display for MaskSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaskSide::Prediction => write!(f, "prediction"),
            MaskSide::GroundTruth => write!(f, "ground truth"),
            MaskSide::Both => write!(f, "both masks"),
        }
    }
}

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// The file is not a valid instance of the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// The file is valid but uses a feature this toolkit does not support.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Voxel data violates an invariant (non-finite values, unknown labels).
    #[error("data error: {0}")]
    Data(String),

    /// A configuration value is out of its valid range.
    #[error("config error: {0}")]
    Config(String),

    /// An interpolation mode is not valid for the volume kind.
    #[error("mode error: {0}")]
    Mode(String),

    /// Array dimensions do not match.
    #[error("shape error: {0}")]
    Shape(String),

    /// A surface-distance metric is undefined because a surface is empty.
    #[error("undefined metric: {side} surface is empty")]
    UndefinedMetric {
        /// Which surface was empty.
        side: MaskSide,
    },

    /// Too few samples to form the requested summary.
    #[error("insufficient samples: got {got}, need at least {need}")]
    InsufficientSamples {
        /// Number of samples provided.
        got: usize,
        /// Minimum number required.
        need: usize,
    },

    /// A covariance matrix is too far from positive semi-definite.
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    /// A text or binary input could not be parsed.
    #[error("parse error in {path}: {message}")]
    Parse {
        /// File the error occurred in.
        path: PathBuf,
        /// What went wrong, with line/offset where known.
        message: String,
    },

    /// A dataset manifest is inconsistent or references missing files.
    #[error("manifest error: {0}")]
    Manifest(String),
}
