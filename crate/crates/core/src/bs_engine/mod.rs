//! Black-Scholes valuation of the contract.
//!
//! Between contract dates the value is the discounted lognormal expectation
//! of the next date's value grid; on withdrawal dates the policyholder
//! maximises intermediate cash plus continuation value.

mod bellman;
mod greeks;
mod implied;
mod put;
mod surface;

pub use bellman::{
    bs_solve_bellman, bs_value_between, bs_value_withdrawal_closed, maximize_withdrawal, quasi_bs_value, QuasiBs,
    solve_bellman, BellmanSolution, PolicyDecision, QuasiValue,
};
pub use greeks::{bs_delta_fd, bs_delta_lr, bs_gamma_fd, LrMode};
pub use implied::{implied_variance, quasi_bs_price, ClaimPricer, VARIANCE_BRACKET};
pub use put::{bs_call, bs_put, bs_put_gamma};
pub use surface::BsSurface;

pub(crate) use bellman::maximize_on_nodes;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VaError};

/// Black-Scholes model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsParams {
    pub variance: f64,
    pub rate: f64,
}

impl BsParams {
    pub fn new(variance: f64, rate: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(VaError::invalid("v", format!("{variance} must be > 0")));
        }
        if !rate.is_finite() {
            return Err(VaError::invalid("r", "must be finite"));
        }
        Ok(BsParams { variance, rate })
    }
}
