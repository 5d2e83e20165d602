//! Delta hedging of the contract with the BS model on simulated paths over
//! the first period `[t_0, t_1]`.
//!
//! The hedge portfolio follows the self-financing recursion
//! `P_{i+1} = D_i (dX_i - r X_i du) + P_i (1 + r du)`, `P_0 = V_BS(t_0, x0, v)`,
//! with the BS delta refreshed every `stride` steps. At `t_1` the position
//! is re-marked at the implied variance `xi_1` of the next claim.

use rayon::prelude::*;
use serde::Serialize;

use crate::bs_engine::{bs_solve_bellman, BellmanSolution, BsParams, BsSurface, ClaimPricer, QuasiBs};
use crate::contract::ContractSpec;
use crate::error::{Result, VaError};
use crate::grid::{GridSpec, ValueGrid};
use crate::market::{conditional_claim_price, Market, PathSet, PathView};
use crate::stats::{fraction_positive, mean, std_dev, Histogram};

/// BS valuation of a contract at mark variance `v` with everything needed on
/// the first period: value grids, the date-`t_1` quasi value and the
/// implied-variance pricer for the date-`t_1` continuation claim.
#[derive(Debug, Clone)]
pub struct ContractValuation {
    spec: ContractSpec,
    params: BsParams,
    solution: BellmanSolution,
    quasi: QuasiBs,
    claim: ClaimPricer,
}

impl ContractValuation {
    pub fn new(spec: &ContractSpec, params: &BsParams, grid_spec: &GridSpec) -> Result<Self> {
        let solution = bs_solve_bellman(spec, params, grid_spec)?;
        let next = solution.value_grid(2);
        Ok(ContractValuation {
            spec: *spec,
            params: *params,
            quasi: QuasiBs::new(spec, 1, params.rate, next)?,
            claim: ClaimPricer::new(spec.date(1), params.rate, next)?,
            solution,
        })
    }

    pub fn spec(&self) -> &ContractSpec {
        &self.spec
    }

    pub fn params(&self) -> &BsParams {
        &self.params
    }

    pub fn solution(&self) -> &BellmanSolution {
        &self.solution
    }

    /// `V_BS(t_1, ., v)`.
    pub fn t1_grid(&self) -> &ValueGrid {
        self.solution.value_grid(1)
    }

    /// `V_BS(t_0, x0, v)`.
    pub fn bs_price(&self) -> Result<f64> {
        self.solution.value_at(0, self.spec.x0)
    }

    /// Date-`t_1` value with the continuation priced at variance `xi`; at
    /// `xi = v` this is `V_BS(t_1, x, v)`.
    pub fn value_t1(&self, x: f64, xi: f64) -> Result<f64> {
        Ok(self.quasi.value(x, xi)?.value)
    }

    pub fn quasi(&self) -> &QuasiBs {
        &self.quasi
    }

    /// Implied variance at `t_1` of the continuation claim, from the
    /// pre-withdrawal state `(x1, alpha1)` of `market`.
    pub fn implied_variance_t1(&self, market: &Market, x1: f64, alpha1: Option<f64>) -> Result<f64> {
        let target = conditional_claim_price(market, self.spec.date(1), x1, alpha1, &self.spec, self.solution.value_grid(2))?;
        self.claim.implied_variance(target, x1)
    }

    /// Value, delta and gamma tables on the time slices of `paths` before `t_1`.
    pub fn surface_for(&self, paths: &PathSet) -> Result<BsSurface> {
        let t1 = self.spec.date(1);
        if (paths.times()[paths.n_steps()] - t1).abs() > 1e-9 * t1.max(1.0) || paths.times()[0] != 0.0 {
            return Err(VaError::invalid("paths", format!("must span [0, {t1}]")));
        }
        BsSurface::new(self.t1_grid(), &self.params, &paths.times()[..paths.n_steps()])
    }
}

/// Hedge state at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HedgeStep {
    pub time: f64,
    pub asset: f64,
    pub hedge_value: f64,
    pub delta: f64,
    /// `P_i - V_BS(u_i, X_i, v)`.
    pub marked_pnl: f64,
}

/// Per-path hedge record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HedgeLedger {
    pub steps: Vec<HedgeStep>,
    pub slippage: f64,
    pub leakage: f64,
    /// `P_N - V_BS(t_1, X_N, xi_1)`.
    pub final_pnl: f64,
    pub xi1: f64,
}

impl HedgeLedger {
    /// Marked P&L at `t_1` under the model variance.
    pub fn marked_final(&self) -> f64 {
        self.steps[self.steps.len() - 1].marked_pnl
    }
}

fn check_path(path: &PathView<'_>, stride: usize) -> Result<()> {
    if stride == 0 || !path.n_steps().is_multiple_of(stride) {
        return Err(VaError::invalid(
            "stride",
            format!("{stride} does not divide {} steps", path.n_steps()),
        ));
    }
    if path.asset.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(VaError::NonFinite("path"));
    }
    Ok(())
}

/// Runs the hedge on one path with a given `xi_1`.
pub fn run_hedge_with_xi(
    path: &PathView<'_>,
    valuation: &ContractValuation,
    surface: &BsSurface,
    stride: usize,
    xi1: f64,
) -> Result<HedgeLedger> {
    check_path(path, stride)?;
    let n = path.n_steps();
    if surface.times().len() != n {
        return Err(VaError::invalid("surface", "time slices do not match the path"));
    }
    let r = valuation.params.rate;
    let v = valuation.params.variance;
    let du = path.times[1] - path.times[0];
    let t1 = path.times[n];
    let x = path.asset;
    let mut steps = Vec::with_capacity(n + 1);
    let mut pi = surface.greeks(0, x[0])?.value;
    let mut delta = 0.0;
    let mut slippage = 0.0;
    for i in 0..n {
        let g = surface.greeks(i, x[i])?;
        if i % stride == 0 {
            delta = g.delta;
        }
        steps.push(HedgeStep {
            time: path.times[i],
            asset: x[i],
            hedge_value: pi,
            delta,
            marked_pnl: pi - g.value,
        });
        let dx = x[i + 1] - x[i];
        slippage += 0.5 * (r * (t1 - path.times[i])).exp() * g.gamma * (v * x[i] * x[i] * du - dx * dx);
        pi = delta * (dx - r * x[i] * du) + pi * (1.0 + r * du);
    }
    let x1 = x[n];
    let v_mark = valuation.value_t1(x1, v)?;
    let marked = pi - v_mark;
    let leakage = leakage(valuation, x1, xi1)?;
    steps.push(HedgeStep {
        time: t1,
        asset: x1,
        hedge_value: pi,
        delta,
        marked_pnl: marked,
    });
    Ok(HedgeLedger {
        steps,
        slippage,
        leakage,
        final_pnl: marked + leakage,
        xi1,
    })
}

/// Runs the hedge on one path, with `xi_1` implied from `market` at the
/// path's terminal state.
pub fn run_hedge(
    path: &PathView<'_>,
    valuation: &ContractValuation,
    surface: &BsSurface,
    stride: usize,
    market: &Market,
) -> Result<HedgeLedger> {
    let xi1 = valuation.implied_variance_t1(market, path.terminal(), path.terminal_variance())?;
    run_hedge_with_xi(path, valuation, surface, stride, xi1)
}

/// `int e^{r(t_1-u)}/2 Gamma [v X^2 du - d[X]]`, left-point sum with
/// `d[X] ~ (dX)^2`.
pub fn slippage(path: &PathView<'_>, valuation: &ContractValuation, surface: &BsSurface) -> Result<f64> {
    check_path(path, 1)?;
    let r = valuation.params.rate;
    let v = valuation.params.variance;
    let n = path.n_steps();
    let du = path.times[1] - path.times[0];
    let t1 = path.times[n];
    let x = path.asset;
    let mut total = 0.0;
    for i in 0..n {
        let gamma = surface.greeks(i, x[i])?.gamma;
        let dx = x[i + 1] - x[i];
        total += 0.5 * (r * (t1 - path.times[i])).exp() * gamma * (v * x[i] * x[i] * du - dx * dx);
    }
    Ok(total)
}

/// `V_BS(t_1, x1, v) - V_BS(t_1, x1, xi1)`.
pub fn leakage(valuation: &ContractValuation, x1: f64, xi1: f64) -> Result<f64> {
    if !(xi1 > 0.0) {
        return Err(VaError::invalid("xi1", format!("{xi1} must be > 0")));
    }
    Ok(valuation.value_t1(x1, valuation.params.variance)? - valuation.value_t1(x1, xi1)?)
}

/// Implied variances at `t_1` for every path (pre-withdrawal state).
pub fn implied_variances(paths: &PathSet, valuation: &ContractValuation, market: &Market) -> Result<Vec<f64>> {
    (0..paths.n_paths())
        .into_par_iter()
        .map(|m| {
            let p = paths.path(m);
            valuation
                .implied_variance_t1(market, p.terminal(), p.terminal_variance())
                .map_err(|e| e.on_path(m))
        })
        .collect()
}

/// Summary of the final P&L over paths for one `(v, stride)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HedgeSummary {
    pub v: f64,
    pub stride: usize,
    pub n_paths: usize,
    pub mean: f64,
    pub std: f64,
    pub fraction_positive: f64,
    pub mean_slippage: f64,
    pub mean_leakage: f64,
    pub histogram: Histogram,
}

/// Final P&L samples and summary for one `(v, stride)`.
#[derive(Debug, Clone)]
pub struct HedgeRun {
    pub summary: HedgeSummary,
    pub ledgers: Vec<HedgeLedger>,
}

/// Bins used for P&L histograms.
pub const PNL_BINS: usize = 20;

/// Runs every `(v, stride)` pair on the same paths.
pub fn hedge_study(
    paths: &PathSet,
    valuations: &[ContractValuation],
    strides: &[usize],
    market: &Market,
) -> Result<Vec<HedgeRun>> {
    if paths.n_paths() == 0 {
        return Err(VaError::invalid("paths", "empty path set"));
    }
    if valuations.is_empty() || strides.is_empty() {
        return Err(VaError::invalid("v_list", "need at least one variance and one stride"));
    }
    let mut runs = Vec::new();
    for valuation in valuations {
        let surface = valuation.surface_for(paths)?;
        let xis = implied_variances(paths, valuation, market)?;
        for &stride in strides {
            let ledgers: Vec<HedgeLedger> = (0..paths.n_paths())
                .into_par_iter()
                .map(|m| {
                    run_hedge_with_xi(&paths.path(m), valuation, &surface, stride, xis[m]).map_err(|e| e.on_path(m))
                })
                .collect::<Result<_>>()?;
            let finals: Vec<f64> = ledgers.iter().map(|l| l.final_pnl).collect();
            let slips: Vec<f64> = ledgers.iter().map(|l| l.slippage).collect();
            let leaks: Vec<f64> = ledgers.iter().map(|l| l.leakage).collect();
            runs.push(HedgeRun {
                summary: HedgeSummary {
                    v: valuation.params.variance,
                    stride,
                    n_paths: finals.len(),
                    mean: mean(&finals),
                    std: std_dev(&finals),
                    fraction_positive: fraction_positive(&finals),
                    mean_slippage: mean(&slips),
                    mean_leakage: mean(&leaks),
                    histogram: Histogram::new(&finals, PNL_BINS),
                },
                ledgers,
            });
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::HestonParams;

    fn valuation(v: f64) -> ContractValuation {
        ContractValuation::new(&ContractSpec::table2(), &BsParams::new(v, 0.0).unwrap(), &GridSpec::default()).unwrap()
    }

    #[test]
    fn constant_path_earns_nothing() {
        let val = valuation(0.04);
        let ps = PathSet::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![50.0; 5], None, 1, 0, "flat").unwrap();
        let surf = val.surface_for(&ps).unwrap();
        let l = run_hedge_with_xi(&ps.path(0), &val, &surf, 1, 0.06).unwrap();
        let v0 = val.bs_price().unwrap();
        for s in &l.steps {
            assert!((s.hedge_value - v0).abs() < 1e-12);
        }
        let expected = v0 - val.value_t1(50.0, 0.06).unwrap();
        assert!((l.final_pnl - expected).abs() < 1e-12);
        assert!((l.final_pnl - (l.marked_final() + l.leakage)).abs() < 1e-12);
    }

    #[test]
    fn self_financing_recursion_is_exact() {
        let val = ContractValuation::new(&ContractSpec::table2(), &BsParams::new(0.04, 0.03).unwrap(), &GridSpec::default()).unwrap();
        let ps = Market::Heston(HestonParams { rate: 0.03, ..HestonParams::table1() })
            .simulate(50.0, 1.0, 24, 3, 1)
            .unwrap();
        let surf = val.surface_for(&ps).unwrap();
        for stride in [1, 3, 12] {
            let p = ps.path(0);
            let l = run_hedge_with_xi(&p, &val, &surf, stride, 0.05).unwrap();
            let du = 1.0 / 24.0;
            for i in 0..24 {
                let (a, b) = (l.steps[i], l.steps[i + 1]);
                let gain = a.delta * ((b.asset - a.asset) - 0.03 * a.asset * du) + a.hedge_value * (1.0 + 0.03 * du);
                assert_eq!(b.hedge_value, gain);
                if i % stride != 0 {
                    assert_eq!(a.delta, l.steps[i - 1].delta);
                }
            }
            assert!((l.final_pnl - (l.marked_final() + l.leakage)).abs() <= 1e-12 * l.final_pnl.abs().max(1.0));
        }
        assert!(run_hedge_with_xi(&ps.path(0), &val, &surf, 5, 0.05).is_err());
    }

    #[test]
    fn leakage_signs() {
        let val = valuation(0.04);
        assert_eq!(leakage(&val, 60.0, 0.04).unwrap(), 0.0);
        assert!(leakage(&val, 60.0, 0.09).unwrap() <= 0.0);
        let val9 = valuation(0.09);
        // full withdrawal is optimal below the guarantee region, so no variance exposure
        assert_eq!(leakage(&val9, 50.0, 0.04).unwrap(), 0.0);
        let l = leakage(&val9, 100.0, 0.04).unwrap();
        assert!(l > 0.0);
        let grid = val9.t1_grid();
        let x = grid.nodes()[grid.nodes().partition_point(|&n| n < 100.0)];
        assert!((val9.value_t1(x, 0.09).unwrap() - grid.interpolate(x)).abs() < 1e-12);
    }

    #[test]
    fn study_rows_match_single_runs() {
        let val = valuation(0.04);
        let market = Market::Heston(HestonParams::table1());
        let ps = market.simulate(50.0, 1.0, 12, 1, 4).unwrap();
        let runs = hedge_study(&ps, std::slice::from_ref(&val), &[1], &market).unwrap();
        let surf = val.surface_for(&ps).unwrap();
        let single = run_hedge(&ps.path(0), &val, &surf, 1, &market).unwrap();
        assert_eq!(runs[0].summary.mean, single.final_pnl);
        assert_eq!(runs[0].ledgers[0], single);
        assert_eq!(runs[0].summary.histogram.total(), 1);
    }
}
