//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Errors produced by frame I/O, calibration, and pipeline operations.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed container data (PGM header, map file magic, JSON syntax).
    #[error("format error: {0}")]
    Format(String),

    /// Sidecar or header metadata is missing, inconsistent, or out of range.
    #[error("metadata error: {0}")]
    Metadata(String),

    /// A pixel value exceeds the range permitted by its declared bit depth.
    #[error("range error: {0}")]
    Range(String),

    /// Caller violated an operation precondition.
    #[error("argument error: {0}")]
    Argument(String),

    /// Banding estimation found no usable flat region.
    #[error("banding estimation failed: {0}")]
    EstimationFailed(String),

    /// A least-squares fit has fewer distinct abscissa values than unknowns.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// A calibration fit converged to physically impossible parameters.
    #[error("calibration quality: {0}")]
    CalibrationQuality(String),

    /// The external-denoiser file exchange did not produce an output in time.
    #[error("external denoiser timeout after {timeout_ms} ms waiting for {path}")]
    HookTimeout { path: PathBuf, timeout_ms: u64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
