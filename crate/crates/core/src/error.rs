use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("resistance coefficient d3 = {0} must be strictly positive")]
    NonConvexResistance(f64),

    #[error("value {value} outside domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank-deficient least-squares design ({0})")]
    RankDeficient(String),

    #[error("solver finished with status {status:?}: {detail}")]
    Solve {
        status: crate::solver::SolveStatus,
        detail: String,
    },

    #[error("objective cross-check failed: solver {solver}, recomputed {recomputed}")]
    ObjectiveMismatch { solver: f64, recomputed: f64 },

    #[error("trajectory csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
