//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector with (near-)zero norm where a direction is required.
    #[error("degenerate vector: norm {norm:.3e} is below {eps:.1e}")]
    DegenerateVector { norm: f64, eps: f64 },

    /// Timestamps went backwards within a stream.
    #[error("non-monotonic time: {t:.6} s follows {prev:.6} s")]
    NonMonotonicTime { prev: f64, t: f64 },

    /// An operation that needs at least one sample received none.
    #[error("empty stream")]
    EmptyStream,

    /// A frame timestamp precedes the first IMU sample.
    #[error("frame at {frame_t:.6} s precedes first IMU sample at {imu_t:.6} s")]
    FrameBeforeStream { frame_t: f64, imu_t: f64 },

    /// Pose and IMU streams do not overlap in time.
    #[error("no temporal overlap between pose and IMU streams")]
    NoTemporalOverlap,

    /// Fewer direction pairs than the rotation fit requires.
    #[error("insufficient pairs: got {got}, need at least {need}")]
    InsufficientPairs { got: usize, need: usize },

    /// The Jacobi SVD did not converge within its sweep budget.
    #[error("SVD did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    /// An accelerometer window with no samples.
    #[error("empty accelerometer window")]
    EmptyWindow,

    /// An empty batch where a reduction is required.
    #[error("empty batch")]
    EmptyBatch,

    /// A numeric verification (e.g. a gradient check) exceeded its
    /// tolerance.
    #[error("numeric check failed: {0}")]
    NumericCheckFailed(String),

    /// Empty input to a summary statistic.
    #[error("empty input")]
    EmptyInput,

    /// A required input file is missing.
    #[error("missing file: {path}")]
    MissingFile { path: PathBuf },

    /// A row in a CSV file could not be parsed.
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// A malformed binary file (bad magic, truncated payload, ...).
    #[error("{path}: malformed file: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    /// Vector/matrix dimensions do not match the declared layout.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    /// A configuration value failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
