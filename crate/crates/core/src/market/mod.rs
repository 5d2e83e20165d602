//! "True" markets the BS valuation is tested against: Heston stochastic
//! volatility, Black-Scholes, and a deterministic piecewise-constant variance
//! model whose conditional expectations are all closed-form.

mod heston;
mod pathset;
mod simulate;

pub use heston::{heston_call, heston_put, HestonParams};
pub use pathset::{PathCache, PathSet, PathView};
pub use simulate::{conditional_claim_price, simulate_bs, simulate_heston, DeterministicVolModel, Market};
