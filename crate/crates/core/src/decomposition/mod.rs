//! Out-of-model valuation adjustments: the realized-volatility term `V1`,
//! the future-smile term `V2` and the sub-optimal-withdrawal term `V3`, with
//! checks that the true price equals `V_BS + V1 + V2 + V3`.

mod attribution;
mod multi_period;
mod two_period;

use serde::{Deserialize, Serialize};

pub use attribution::{attribution_report, AttributionReport, AttributionRow};
pub use multi_period::{verify_theorem2, MultiPeriodDecomposition};
pub use two_period::{
    estimate_v1, estimate_v1_alpha, estimate_v2, theorem1_quadrature, true_price_two_period, two_period_samples,
    verify_theorem1, TwoPeriodSamples,
};

/// True price against its BS price plus adjustments, with Monte Carlo
/// standard errors (zero for quadrature results).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub bs_price: f64,
    pub va_realized: f64,
    pub va_smile: f64,
    pub va_suboptimal: f64,
    pub true_price: f64,
    pub residual: f64,
    pub se_realized: f64,
    pub se_smile: f64,
    pub se_true: f64,
    pub se_residual: f64,
    pub n_paths: usize,
    pub n_steps: usize,
}

impl DecompositionReport {
    /// `max(3 SE, rel * bs_price)`.
    pub fn tolerance(&self, rel: f64) -> f64 {
        (3.0 * self.se_residual).max(rel * self.bs_price.abs())
    }

    pub const CSV_HEADER: &'static str = "bs_price,va_realized,va_smile,va_suboptimal,true_price,residual,se_realized,se_smile,se_true,se_residual,n_paths,n_steps";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
            self.bs_price,
            self.va_realized,
            self.va_smile,
            self.va_suboptimal,
            self.true_price,
            self.residual,
            self.se_realized,
            self.se_smile,
            self.se_true,
            self.se_residual,
            self.n_paths,
            self.n_steps
        )
    }
}
