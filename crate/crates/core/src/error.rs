use thiserror::Error;

/// Errors raised by the pricing, simulation and hedging routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum VaError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infeasible withdrawal {withdrawal} from account value {account}")]
    InfeasibleWithdrawal { account: f64, withdrawal: f64 },

    #[error("value grid has {0} nodes, at least 4 are required")]
    GridTooCoarse(usize),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("target price {target} is below the zero-variance bound {bound}")]
    BelowLowerBound { target: f64, bound: f64 },

    #[error("target price {target} is above the price {bound} at the upper variance bracket {upper}")]
    AboveUpperBound { target: f64, bound: f64, upper: f64 },

    #[error("root search failed: {0}")]
    RootNotFound(String),

    #[error("characteristic-function integration did not converge (tail estimate {tail:e})")]
    IntegrationNotConverged { tail: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("path {path}: {message}")]
    OnPath { path: usize, message: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl VaError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        VaError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn on_path(self, path: usize) -> Self {
        VaError::OnPath {
            path,
            message: self.to_string(),
        }
    }
}

impl From<std::io::Error> for VaError {
    fn from(e: std::io::Error) -> Self {
        VaError::Io(e.to_string())
    }
}

impl From<csv::Error> for VaError {
    fn from(e: csv::Error) -> Self {
        VaError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, VaError>;
