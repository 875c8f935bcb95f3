use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates an invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A strategy id outside the library was requested.
    #[error("unknown strategy id {0}")]
    UnknownStrategy(usize),

    /// An input vector had the wrong length.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Calibration could not bracket the requested target.
    #[error("calibration target {target} for strategy `{strategy}` is outside the reachable range ({lo:.4}, {hi:.4})")]
    CalibrationUnreachable {
        strategy: String,
        target: f64,
        lo: f64,
        hi: f64,
    },

    /// A NaN or infinity appeared where finite values are required.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    /// Stored data failed a consistency check (e.g. old_prob = 0).
    #[error("data corruption: {0}")]
    DataCorruption(String),

    /// A checkpoint file could not be decoded.
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    /// HTTP transport failure after retries were exhausted.
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// The completion text did not contain an extractable answer.
    #[error("answer extraction failed: {0}")]
    Extraction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
