//! Error type shared by all modules.

use std::fmt;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes surfaced by the library.
///
/// `Dimension` and `Usage` indicate caller mistakes, `Domain` an input outside
/// an operation's mathematical domain, and `Numerical` a runtime breakdown
/// (non-finite values, failed factorization).
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix dimensions incompatible with the requested operation.
    Dimension { op: &'static str, detail: String },
    /// Input outside the operation's domain (zero column, infeasible target, ...).
    Domain { detail: String },
    /// Numerical failure during computation.
    Numerical { detail: String },
    /// Inconsistent configuration or misuse of an API contract.
    Usage { detail: String },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(detail: impl Into<String>) -> Self {
        Error::Domain {
            detail: detail.into(),
        }
    }

    pub(crate) fn numerical(detail: impl Into<String>) -> Self {
        Error::Numerical {
            detail: detail.into(),
        }
    }

    pub(crate) fn usage(detail: impl Into<String>) -> Self {
        Error::Usage {
            detail: detail.into(),
        }
    }

    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, detail } => write!(f, "dimension mismatch in {op}: {detail}"),
            Error::Domain { detail } => write!(f, "domain error: {detail}"),
            Error::Numerical { detail } => write!(f, "numerical error: {detail}"),
            Error::Usage { detail } => write!(f, "usage error: {detail}"),
        }
    }
}

impl std::error::Error for Error {}
