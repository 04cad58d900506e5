use thiserror::Error;

/// Errors raised while building or evaluating prediction regions.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FabError {
    #[error("{op}: argument out of domain: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("{op}: accepted points reach the search window edge at half-width {half_width}; region is unbounded or wider than the window")]
    UnboundedRegion { op: &'static str, half_width: f64 },

    #[error("{what} is not symmetric positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("alpha = {alpha} is not of the form k/(n+1) with n = {n}; nearest feasible values are {below} and {above}")]
    InfeasibleAlpha {
        alpha: f64,
        n: usize,
        below: f64,
        above: f64,
    },

    #[error("insufficient residual degrees of freedom: {0}")]
    InsufficientDf(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl FabError {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        FabError::Domain {
            op,
            msg: msg.into(),
        }
    }

    /// True for failures of the numerical machinery (as opposed to bad user input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FabError::UnboundedRegion { .. } | FabError::NotPositiveDefinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, FabError>;
