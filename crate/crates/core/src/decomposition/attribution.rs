//! Step-by-step attribution of the contract value change along one path
//! over the first period under a deterministic-variance market.

use serde::Serialize;

use super::multi_period::{decompose, mean_variance, realized_adjustment};
use crate::contract::ContractSpec;
use crate::error::{Result, VaError};
use crate::grid::{Greeks, GridSpec, LognormalStep, PiecewiseLinear, ValueGrid};
use crate::market::{DeterministicVolModel, PathView};
use crate::numerics::GaussLegendre;

const V1_NODES: usize = 64;

/// Increments over `[u_i, u_{i+1}]`. `total` is the sum of the first five
/// effects; `realized_vol_adjustment` is the change in `V1`, and
/// `unexplained` is what the model value change leaves after both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttributionRow {
    pub step: usize,
    pub time: f64,
    pub time_decay: f64,
    pub delta_effect: f64,
    pub realized_vol_effect: f64,
    pub smile_effect: f64,
    pub withdrawal_effect: f64,
    pub total: f64,
    pub realized_vol_adjustment: f64,
    pub value_change: f64,
    pub unexplained: f64,
}

impl AttributionRow {
    pub const CSV_HEADER: &'static str = "step,time,time_decay,delta_effect,realized_vol_effect,smile_effect,withdrawal_effect,total,realized_vol_adjustment,value_change,unexplained";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.step,
            self.time,
            self.time_decay,
            self.delta_effect,
            self.realized_vol_effect,
            self.smile_effect,
            self.withdrawal_effect,
            self.total,
            self.realized_vol_adjustment,
            self.value_change,
            self.unexplained
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionReport {
    pub rows: Vec<AttributionRow>,
    /// True value at the first and last path times (pre-withdrawal at `t_1`).
    pub start_value: f64,
    pub end_value: f64,
    /// `sum (total + realized_vol_adjustment) - (end_value - start_value)`.
    pub telescoping_error: f64,
    pub max_abs_row: f64,
}

struct Evaluator<'a> {
    model: &'a DeterministicVolModel,
    v: f64,
    t1: f64,
    mark_grid: &'a ValueGrid,
    mark: PiecewiseLinear,
    truth_grid: &'a ValueGrid,
    truth: PiecewiseLinear,
    v2_grid: &'a ValueGrid,
    v2: PiecewiseLinear,
    v3_grid: &'a ValueGrid,
    v3: PiecewiseLinear,
    gl: GaussLegendre,
}

impl Evaluator<'_> {
    fn bs(&self, u: f64, x: f64) -> Result<Greeks> {
        if u >= self.t1 {
            return Ok(Greeks {
                value: self.mark_grid.interpolate(x),
                delta: self.mark_grid.slope(x),
                gamma: 0.0,
            });
        }
        Ok(self.mark.greeks(x, &LognormalStep::new(self.t1 - u, self.v, self.model.rate)?))
    }

    fn under_truth(&self, grid: &ValueGrid, pl: &PiecewiseLinear, u: f64, x: f64) -> Result<f64> {
        if u >= self.t1 {
            return Ok(grid.interpolate(x));
        }
        let w = mean_variance(self.model, u, self.t1);
        Ok(pl.expectation(x, &LognormalStep::new(self.t1 - u, w, self.model.rate)?))
    }

    fn v1(&self, u: f64, x: f64) -> Result<f64> {
        realized_adjustment(self.model, &self.mark, self.v, u, self.t1, x, &self.gl)
    }
}

/// Attribution of the value change along `path`, which must start at `t_0`
/// and end at or before `t_1`.
pub fn attribution_report(
    model: &DeterministicVolModel,
    spec: &ContractSpec,
    v: f64,
    grid_spec: &GridSpec,
    path: &PathView<'_>,
) -> Result<AttributionReport> {
    let t1 = spec.date(1);
    let times = path.times;
    if times.len() < 2 || times[0] != 0.0 || times[times.len() - 1] > t1 * (1.0 + 1e-12) {
        return Err(VaError::invalid("path", format!("times must lie in [0, {t1}] starting at 0")));
    }
    if path.asset.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(VaError::NonFinite("path"));
    }
    let d = decompose(model, spec, v, grid_spec)?;
    let mark_grid = d.mark().value_grid(1);
    let truth_grid = d.truth().value_grid(1);
    let ev = Evaluator {
        model,
        v,
        t1,
        mark: mark_grid.piecewise_linear(),
        mark_grid,
        truth: truth_grid.piecewise_linear(),
        truth_grid,
        v2: d.v2_grid(1).piecewise_linear(),
        v2_grid: d.v2_grid(1),
        v3: d.v3_grid(1).piecewise_linear(),
        v3_grid: d.v3_grid(1),
        gl: GaussLegendre::new(V1_NODES),
    };
    let u_end = |u: f64| if (u - t1).abs() <= 1e-12 * t1 { t1 } else { u };
    let x = path.asset;
    let mut rows = Vec::with_capacity(times.len() - 1);
    let mut v2_prev = ev.under_truth(ev.v2_grid, &ev.v2, 0.0, x[0])?;
    let mut v3_prev = ev.under_truth(ev.v3_grid, &ev.v3, 0.0, x[0])?;
    let mut v1_prev = ev.v1(0.0, x[0])?;
    let start_value = ev.under_truth(ev.truth_grid, &ev.truth, 0.0, x[0])?;
    let mut value_prev = start_value;
    for i in 0..times.len() - 1 {
        let (u, u_next) = (times[i], u_end(times[i + 1]));
        let g = ev.bs(u, x[i])?;
        let dx = x[i + 1] - x[i];
        let time_decay = ev.bs(u_next, x[i])?.value - g.value;
        let delta_effect = g.delta * dx;
        let realized_vol_effect = 0.5 * g.gamma * dx * dx;
        let v2_next = ev.under_truth(ev.v2_grid, &ev.v2, u_next, x[i + 1])?;
        let v3_next = ev.under_truth(ev.v3_grid, &ev.v3, u_next, x[i + 1])?;
        let v1_next = ev.v1(u_next, x[i + 1])?;
        let value_next = ev.under_truth(ev.truth_grid, &ev.truth, u_next, x[i + 1])?;
        let smile_effect = v2_next - v2_prev;
        let withdrawal_effect = v3_next - v3_prev;
        let total = time_decay + delta_effect + realized_vol_effect + smile_effect + withdrawal_effect;
        let realized_vol_adjustment = v1_next - v1_prev;
        let value_change = value_next - value_prev;
        rows.push(AttributionRow {
            step: i,
            time: u,
            time_decay,
            delta_effect,
            realized_vol_effect,
            smile_effect,
            withdrawal_effect,
            total,
            realized_vol_adjustment,
            value_change,
            unexplained: value_change - total - realized_vol_adjustment,
        });
        (v1_prev, v2_prev, v3_prev, value_prev) = (v1_next, v2_next, v3_next, value_next);
    }
    let explained: f64 = rows.iter().map(|r| r.total + r.realized_vol_adjustment).sum();
    let max_abs_row = rows
        .iter()
        .flat_map(|r| {
            [
                r.time_decay,
                r.delta_effect,
                r.realized_vol_effect,
                r.smile_effect,
                r.withdrawal_effect,
                r.realized_vol_adjustment,
            ]
        })
        .fold(0.0, |m: f64, c| m.max(c.abs()));
    Ok(AttributionReport {
        telescoping_error: explained - (value_prev - start_value),
        rows,
        start_value,
        end_value: value_prev,
        max_abs_row,
    })
}
