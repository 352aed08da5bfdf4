use thiserror::Error;

/// Errors raised by the alignment library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {index} lies outside the ball (norm {norm} >= radius {radius})")]
    OutsideBall {
        index: usize,
        norm: f64,
        radius: f64,
    },

    #[error("weights must be nonnegative and sum to 1 (sum = {0})")]
    InvalidWeights(f64),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("instance too large for the exact solver: {n_s} x {n_t}")]
    InstanceTooLarge { n_s: usize, n_t: usize },

    #[error("degenerate coupling: row {row} has mass {mass:e}")]
    DegenerateRow { row: usize, mass: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("covariance is singular (smallest eigenvalue {0:e})")]
    SingularCovariance(f64),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("line search failed after {backtracks} backtracks (directional derivative {slope:e})")]
    LineSearch { backtracks: usize, slope: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::DegenerateRow { .. }
                | Error::SingularCovariance(_)
                | Error::LineSearch { .. }
                | Error::NotSpd(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
