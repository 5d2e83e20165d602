use rayon::prelude::*;

use super::bellman::horizon;
use super::BsParams;
use crate::error::{Result, VaError};
use crate::grid::{Greeks, LognormalStep, PiecewiseLinear, ValueGrid};

/// Value, delta and gamma of the between-dates BS value on a fixed set of
/// time slices, tabulated on the grid nodes and interpolated with cubic
/// Hermite splines (value from value and delta, delta from delta and gamma).
#[derive(Debug, Clone)]
pub struct BsSurface {
    times: Vec<f64>,
    params: BsParams,
    data: PiecewiseLinear,
    grid: ValueGrid,
    // [slice][node]
    table: Vec<Vec<Greeks>>,
}

impl BsSurface {
    pub fn new(t1_grid: &ValueGrid, params: &BsParams, times: &[f64]) -> Result<Self> {
        for &u in times {
            horizon(u, t1_grid)?;
        }
        let data = t1_grid.piecewise_linear();
        let nodes = t1_grid.nodes();
        let table = times
            .par_iter()
            .map(|&u| {
                let tau = (t1_grid.time() - u).max(0.0);
                let step = LognormalStep {
                    tau,
                    variance: params.variance,
                    rate: params.rate,
                };
                nodes.iter().map(|&x| data.greeks(x, &step)).collect()
            })
            .collect();
        Ok(BsSurface {
            times: times.to_vec(),
            params: *params,
            data,
            grid: t1_grid.clone(),
            table,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn params(&self) -> &BsParams {
        &self.params
    }

    pub fn maturity_grid(&self) -> &ValueGrid {
        &self.grid
    }

    fn step(&self, slice: usize) -> LognormalStep {
        LognormalStep {
            tau: (self.grid.time() - self.times[slice]).max(0.0),
            variance: self.params.variance,
            rate: self.params.rate,
        }
    }

    /// Greeks evaluated directly, without the table.
    pub fn exact(&self, slice: usize, x: f64) -> Greeks {
        self.data.greeks(x, &self.step(slice))
    }

    /// Interpolated greeks at time slice `slice`.
    pub fn greeks(&self, slice: usize, x: f64) -> Result<Greeks> {
        if slice >= self.times.len() {
            return Err(VaError::invalid("slice", format!("{slice} out of range")));
        }
        if !(x >= 0.0) || !x.is_finite() {
            return Err(VaError::invalid("x", format!("account value {x} must be >= 0")));
        }
        let nodes = self.grid.nodes();
        if x >= nodes[nodes.len() - 1] {
            return Ok(self.exact(slice, x));
        }
        let i = self.grid.segment(x);
        let (x0, x1) = (nodes[i], nodes[i + 1]);
        let row = &self.table[slice];
        let (g0, g1) = (row[i], row[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(Greeks {
            value: h00 * g0.value + h10 * h * g0.delta + h01 * g1.value + h11 * h * g1.delta,
            delta: h00 * g0.delta + h10 * h * g0.gamma + h01 * g1.delta + h11 * h * g1.gamma,
            gamma: (1.0 - t) * g0.gamma + t * g1.gamma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs_engine::{bs_gamma_fd, bs_solve_bellman};
    use crate::contract::ContractSpec;
    use crate::grid::GridSpec;

    #[test]
    fn interpolated_greeks_track_direct_evaluation() {
        let spec = ContractSpec::table2();
        let p = BsParams::new(0.04, 0.0).unwrap();
        let sol = bs_solve_bellman(&spec, &p, &GridSpec::default()).unwrap();
        let g1 = sol.value_grid(1);
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let surf = BsSurface::new(g1, &p, &times).unwrap();
        for slice in [0, 5, 9] {
            for x in [31.7, 50.0, 66.6, 83.3, 97.1] {
                let a = surf.greeks(slice, x).unwrap();
                let b = surf.exact(slice, x);
                assert!((a.value - b.value).abs() < 1e-6, "{a:?} {b:?}");
                assert!((a.delta - b.delta).abs() < 1e-4);
                assert!((a.gamma - b.gamma).abs() < 1e-3 * b.gamma.abs().max(1e-2));
            }
        }
        let fd = bs_gamma_fd(0.0, 60.0, &p, g1, 6e-3).unwrap();
        assert!((surf.exact(0, 60.0).gamma - fd).abs() < 1e-5);
        assert_eq!(surf.greeks(0, 400.0).unwrap(), surf.exact(0, 400.0));
    }
}
