use thiserror::Error;

/// Errors raised by dataset construction and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),

    #[error("unbalanced panel: individuals {individuals:?} do not cover the common period range")]
    Unbalanced { individuals: Vec<String> },

    #[error("insufficient periods: {found} available, at least {required} required")]
    InsufficientPeriods { found: usize, required: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("rank-deficient Gram matrix; dependent columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("singular Hessian; sandwich covariance unavailable")]
    SingularHessian,

    #[error("structured differenced likelihood requires lag order 1, got {0}")]
    UnsupportedLagOrder(usize),

    #[error("insufficient moment conditions: {0}")]
    InsufficientMoments(String),
}

impl Error {
    /// Input and configuration problems, as opposed to numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Parse { .. }
                | Error::MissingColumn(_)
                | Error::Unbalanced { .. }
                | Error::InsufficientPeriods { .. }
                | Error::Invalid(_)
                | Error::UnsupportedLagOrder(_)
                | Error::InsufficientMoments(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
