use thiserror::Error;

/// Errors reported by the optimizer.
///
/// Every failure mode of the public API is one of these variants; the
/// library never panics on user input.
#[derive(Debug, Error)]
pub enum CmaError {
    /// A construction-time parameter violates its contract.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A `tell` batch violates its contract (wrong count, NaN values,
    /// dimension mismatch, non-finite coordinates).
    #[error("invalid solutions: {0}")]
    InvalidSolutions(String),

    /// The search distribution degenerated (non-positive-definite or
    /// non-finite covariance, non-finite mean or step-size).
    #[error("covariance blow-up: {0}")]
    CovarianceBlowUp(String),

    /// A snapshot payload could not be decoded.
    #[error("snapshot decode error at byte {offset}: {reason}")]
    SnapshotDecode { offset: usize, reason: String },

    /// A snapshot was written by an incompatible format version.
    #[error("snapshot version mismatch: found {found}, supported {supported}")]
    SnapshotVersion { found: u32, supported: u32 },
}

pub type Result<T> = std::result::Result<T, CmaError>;
