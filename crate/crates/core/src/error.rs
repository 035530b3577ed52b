use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A computation would exceed the configured size or memory limit.
    #[error("size cap exceeded for {what}: requires {requested}, limit is {limit}")]
    CapExceeded {
        what: &'static str,
        requested: u128,
        limit: u128,
    },

    /// A combinatorial enumeration (permutations, multiset orderings) is too large.
    #[error("combinatorial budget exceeded: {0}")]
    Budget(String),

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is singular")]
    Singular,

    #[error("matrices do not commute (residual {0:e})")]
    NotCommuting(f64),

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),
}

impl Error {
    /// Whether the error is a size/budget violation rather than bad input or a numeric failure.
    pub fn is_cap(&self) -> bool {
        matches!(self, Error::CapExceeded { .. } | Error::Budget(_) | Error::Overflow(_))
    }

    /// Whether the error reports a numerical failure (non-SPD, singular, ...).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite | Error::Singular | Error::NotCommuting(_) | Error::NotSymmetric(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
