use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("subcarrier index {index} out of range (N = {n})")]
    SubcarrierOutOfRange { index: usize, n: usize },

    #[error("angle {0} deg outside the open interval (-90, 90)")]
    InvalidAngle(f64),

    #[error("empty subcarrier set")]
    EmptySubcarrierSet,

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    EigenNoConvergence { sweeps: usize, residual: f64 },

    /// Fewer than two spectrum peaks could be resolved.
    #[error("peaks merged: only one spectrum peak found near {angle_deg:.3} deg")]
    PeaksMerged { angle_deg: f64 },

    #[error("no detection: peak-to-median ratio {ratio_db:.2} dB below floor {floor_db:.2} dB")]
    NoDetection { ratio_db: f64, floor_db: f64 },

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("malformed data file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
