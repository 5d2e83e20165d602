//! Contract payoff algebra: account transition across a withdrawal date,
//! the feasible withdrawal set, and the intermediate and terminal payoffs.
//!
//! The state is the scalar investment-account value. Withdrawal dates are
//! `t_1, ..., t_{N-1}` spaced by `delta`; `t_0` is inception and `t_N` maturity.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VaError};

/// Relative slack allowed when a withdrawal overshoots the account by rounding.
const FEASIBILITY_SLACK: f64 = 1e-12;

/// Guaranteed-withdrawal contract parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSpec {
    /// Fraction of an intermediate withdrawal forfeited as penalty.
    #[serde(rename = "eta")]
    pub penalty: f64,
    /// Guaranteed amount paid at maturity if the account is below it.
    pub guarantee: f64,
    /// Number of periods `N`; maturity is `t_N = N * delta`.
    pub n_periods: usize,
    /// Spacing between consecutive contract dates, in years.
    pub delta: f64,
    /// Initial account value.
    pub x0: f64,
}

impl ContractSpec {
    pub fn new(penalty: f64, guarantee: f64, n_periods: usize, delta: f64, x0: f64) -> Result<Self> {
        let spec = ContractSpec {
            penalty,
            guarantee,
            n_periods,
            delta,
            x0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Two-period product used throughout the numerical experiments:
    /// `eta = 0.6`, `G = 50`, `t_i = i`.
    pub fn table2() -> Self {
        ContractSpec {
            penalty: 0.6,
            guarantee: 50.0,
            n_periods: 2,
            delta: 1.0,
            x0: 50.0,
        }
    }

    pub fn with_periods(mut self, n_periods: usize) -> Result<Self> {
        self.n_periods = n_periods;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.penalty) {
            return Err(VaError::invalid("eta", format!("{} not in [0, 1]", self.penalty)));
        }
        if !(self.guarantee >= 0.0 && self.guarantee.is_finite()) {
            return Err(VaError::invalid("guarantee", format!("{} must be >= 0", self.guarantee)));
        }
        if self.n_periods < 2 {
            return Err(VaError::invalid("n_periods", format!("{} must be >= 2", self.n_periods)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(VaError::invalid("delta", format!("{} must be > 0", self.delta)));
        }
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(VaError::invalid("x0", format!("{} must be > 0", self.x0)));
        }
        Ok(())
    }

    /// Contract date `t_n`.
    pub fn date(&self, n: usize) -> f64 {
        n as f64 * self.delta
    }

    pub fn maturity(&self) -> f64 {
        self.date(self.n_periods)
    }

    pub fn is_withdrawal_date(&self, n: usize) -> bool {
        n >= 1 && n < self.n_periods
    }

    /// Feasible withdrawals `[0, x]`.
    pub fn feasible_set(&self, x: f64) -> Result<(f64, f64)> {
        if !(x >= 0.0) {
            return Err(VaError::invalid("x", format!("account value {x} must be >= 0")));
        }
        Ok((0.0, x))
    }

    /// Account value after withdrawing `a` from `x`: `max(x - a, 0)`.
    pub fn transition(&self, x: f64, a: f64) -> Result<f64> {
        let a = self.check_withdrawal(x, a)?;
        Ok((x - a).max(0.0))
    }

    /// Cash received by the policyholder for withdrawing `a`: `a (1 - eta)`.
    pub fn intermediate_payoff(&self, x: f64, a: f64) -> Result<f64> {
        let a = self.check_withdrawal(x, a)?;
        Ok(a * (1.0 - self.penalty))
    }

    /// Maturity payoff `x + max(G - x, 0) = max(x, G)`.
    pub fn terminal_payoff(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(VaError::invalid("x", format!("account value {x} must be >= 0")));
        }
        Ok(x.max(self.guarantee))
    }

    /// Validates `0 <= a <= x`, clamping rounding overshoot to `x`.
    fn check_withdrawal(&self, x: f64, a: f64) -> Result<f64> {
        let slack = FEASIBILITY_SLACK * x.abs().max(1.0);
        if !(x >= 0.0) || !(a >= 0.0) || a > x + slack {
            return Err(VaError::InfeasibleWithdrawal {
                account: x,
                withdrawal: a,
            });
        }
        Ok(a.min(x))
    }
}
