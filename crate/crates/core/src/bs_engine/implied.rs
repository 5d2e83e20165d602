use super::bellman::horizon;
use crate::error::{Result, VaError};
use crate::grid::{LognormalStep, PiecewiseLinear, ValueGrid};
use crate::numerics::brent;

/// Search bracket for implied variances.
pub const VARIANCE_BRACKET: (f64, f64) = (1e-8, 4.0);

/// European claim paying the interpolated `claim_grid` at its date, priced
/// at constant variance from an earlier date.
#[derive(Debug, Clone)]
pub struct ClaimPricer {
    tau: f64,
    rate: f64,
    claim: PiecewiseLinear,
}

impl ClaimPricer {
    pub fn new(t_n: f64, rate: f64, claim_grid: &ValueGrid) -> Result<Self> {
        let tau = horizon(t_n, claim_grid)?;
        if tau <= 0.0 {
            return Err(VaError::invalid("t_n", "must be before the claim date"));
        }
        Ok(ClaimPricer {
            tau,
            rate,
            claim: claim_grid.piecewise_linear(),
        })
    }

    pub fn price(&self, x: f64, xi: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(VaError::invalid("x", format!("account value {x} must be >= 0")));
        }
        let step = LognormalStep::new(self.tau, xi, self.rate)?;
        Ok(self.claim.expectation(x, &step))
    }

    /// Variance in the bracket at which the claim is worth `target`.
    pub fn implied_variance(&self, target: f64, x: f64) -> Result<f64> {
        if !target.is_finite() {
            return Err(VaError::NonFinite("implied variance target"));
        }
        let (lo, hi) = VARIANCE_BRACKET;
        let ftol = 1e-12 * target.abs().max(1.0);
        let p_lo = self.price(x, lo)?;
        if target < p_lo - ftol {
            return Err(VaError::BelowLowerBound { target, bound: p_lo });
        }
        if (target - p_lo).abs() <= ftol {
            return Ok(lo);
        }
        let p_hi = self.price(x, hi)?;
        if target > p_hi + ftol {
            return Err(VaError::AboveUpperBound {
                target,
                bound: p_hi,
                upper: hi,
            });
        }
        if (target - p_hi).abs() <= ftol {
            return Ok(hi);
        }
        let step = |xi: f64| LognormalStep {
            tau: self.tau,
            variance: xi,
            rate: self.rate,
        };
        brent(
            |xi| self.claim.expectation(x, &step(xi)) - target,
            lo,
            hi,
            1e-15,
            4.0 * f64::EPSILON * target.abs().max(1.0),
            200,
        )
    }
}

/// Price at `(t_n, x)` of the claim paying `claim_grid` at its date, at variance `xi`.
pub fn quasi_bs_price(t_n: f64, x: f64, xi: f64, rate: f64, claim_grid: &ValueGrid) -> Result<f64> {
    ClaimPricer::new(t_n, rate, claim_grid)?.price(x, xi)
}

/// Variance `xi` with `quasi_bs_price(t_n, x, xi) = target_price`.
pub fn implied_variance(target_price: f64, t_n: f64, x: f64, rate: f64, claim_grid: &ValueGrid) -> Result<f64> {
    ClaimPricer::new(t_n, rate, claim_grid)?.implied_variance(target_price, x)
}
