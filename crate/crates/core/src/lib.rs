//! Pricing, hedging and out-of-model valuation adjustments for a
//! guaranteed-withdrawal variable annuity.
//!
//! The contract is valued in a Black-Scholes model ([`bs_engine`]). The
//! [`market`] module provides the "true" markets the valuation is tested
//! against: Heston, Black-Scholes, and deterministic time-varying variance.
//! [`hedging`] runs the delta-hedging protocol on simulated paths and
//! [`decomposition`] splits the true price into the BS price plus
//! adjustments for realized volatility, future smile and sub-optimal
//! withdrawal.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bs_engine;
pub mod contract;
pub mod decomposition;
pub mod error;
pub mod grid;
pub mod hedging;
pub mod market;
pub mod numerics;
pub mod stats;

pub use bs_engine::{BellmanSolution, BsParams, BsSurface, LrMode, PolicyDecision};
pub use contract::ContractSpec;
pub use error::{Result, VaError};
pub use decomposition::{AttributionRow, DecompositionReport, MultiPeriodDecomposition};
pub use grid::{GridSpec, LognormalStep, ValueGrid};
pub use hedging::{ContractValuation, HedgeLedger, HedgeSummary};
pub use market::{DeterministicVolModel, HestonParams, Market, PathSet};
pub use stats::{Estimate, Histogram};
