use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::put::put_unchecked;
use super::BsParams;
use crate::contract::ContractSpec;
use crate::error::{Result, VaError};
use crate::grid::{GridSpec, LognormalStep, PiecewiseLinear, ValueGrid};
use crate::numerics::golden_section_max;

/// Optimal withdrawal at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub period: usize,
    pub state_x: f64,
    pub a_star: f64,
    pub value: f64,
}

/// Value and maximising withdrawal of the quasi-BS objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiValue {
    pub value: f64,
    pub a_tilde: f64,
}

/// Grids of a backward induction over the contract dates.
#[derive(Debug, Clone)]
pub struct BellmanSolution {
    spec: ContractSpec,
    variances: Vec<f64>,
    rate: f64,
    /// `V(t_n, .)` for `n = 0..=N`.
    value_grids: Vec<ValueGrid>,
    /// Post-withdrawal continuation `C(t_n, .)` for `n = 0..N`.
    continuation_grids: Vec<ValueGrid>,
    /// Optimal withdrawal at each node, `n = 0..N` (zero at inception).
    policies: Vec<Vec<f64>>,
}

impl BellmanSolution {
    pub fn spec(&self) -> &ContractSpec {
        &self.spec
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Variance used over `(t_n, t_{n+1}]`.
    pub fn period_variance(&self, n: usize) -> f64 {
        self.variances[n]
    }

    pub fn nodes(&self) -> &[f64] {
        self.value_grids[0].nodes()
    }

    pub fn value_grid(&self, n: usize) -> &ValueGrid {
        &self.value_grids[n]
    }

    pub fn value_grids(&self) -> &[ValueGrid] {
        &self.value_grids
    }

    pub fn continuation_grid(&self, n: usize) -> &ValueGrid {
        &self.continuation_grids[n]
    }

    pub fn policy(&self, n: usize) -> &[f64] {
        &self.policies[n]
    }

    pub fn step(&self, n: usize) -> LognormalStep {
        LognormalStep {
            tau: self.spec.delta,
            variance: self.variances[n],
            rate: self.rate,
        }
    }

    /// `V(t_n, x)` off the grid: exact expectation at inception, exact
    /// maximisation over the interpolated continuation on withdrawal dates.
    pub fn value_at(&self, n: usize, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(VaError::invalid("x", format!("account value {x} must be >= 0")));
        }
        let big_n = self.spec.n_periods;
        if n > big_n {
            return Err(VaError::invalid("n", format!("{n} exceeds N = {big_n}")));
        }
        if n == big_n {
            return self.spec.terminal_payoff(x);
        }
        if n == 0 {
            let pl = self.value_grids[1].piecewise_linear();
            return Ok(pl.expectation(x, &self.step(0)));
        }
        Ok(maximize_withdrawal(&self.spec, &self.continuation_grids[n], x).0)
    }

    /// One row per node and withdrawal date.
    pub fn policy_table(&self) -> Vec<PolicyDecision> {
        let mut rows = Vec::new();
        for n in 1..self.spec.n_periods {
            for (i, &x) in self.nodes().iter().enumerate() {
                rows.push(PolicyDecision {
                    period: n,
                    state_x: x,
                    a_star: self.policies[n][i],
                    value: self.value_grids[n].values()[i],
                });
            }
        }
        rows
    }
}

/// Backward induction from `V(t_N) = g` with variance `variances[n]` on
/// `(t_n, t_{n+1}]`. No withdrawal is taken at `t_0`.
pub fn solve_bellman(spec: &ContractSpec, variances: &[f64], rate: f64, grid_spec: &GridSpec) -> Result<BellmanSolution> {
    spec.validate()?;
    let big_n = spec.n_periods;
    if variances.len() != big_n {
        return Err(VaError::invalid(
            "variances",
            format!("{} period variances for N = {big_n}", variances.len()),
        ));
    }
    let nodes = grid_spec.nodes(spec)?;
    let terminal = ValueGrid::from_fn(Arc::clone(&nodes), spec.maturity(), |x| {
        x.max(spec.guarantee)
    })?;
    let mut value_grids = vec![terminal];
    let mut continuation_grids = Vec::with_capacity(big_n);
    let mut policies = Vec::with_capacity(big_n);
    for n in (0..big_n).rev() {
        let step = LognormalStep::new(spec.delta, variances[n], rate)?;
        let next = value_grids.last().expect("nonempty");
        let cont = next.propagate(&step, spec.date(n))?;
        if n == 0 {
            value_grids.push(cont.clone());
            policies.push(vec![0.0; nodes.len()]);
        } else {
            let (values, a, _) = maximize_on_nodes(spec, &cont);
            value_grids.push(ValueGrid::new(Arc::clone(&nodes), values, spec.date(n))?);
            policies.push(a);
        }
        continuation_grids.push(cont);
    }
    value_grids.reverse();
    continuation_grids.reverse();
    policies.reverse();
    Ok(BellmanSolution {
        spec: *spec,
        variances: variances.to_vec(),
        rate,
        value_grids,
        continuation_grids,
        policies,
    })
}

/// Black-Scholes Bellman recursion at constant variance.
pub fn bs_solve_bellman(spec: &ContractSpec, params: &BsParams, grid_spec: &GridSpec) -> Result<BellmanSolution> {
    solve_bellman(spec, &vec![params.variance; spec.n_periods], params.rate, grid_spec)
}

/// Maximises `a (1 - eta) + C(x - a)` at every node. With `y = x - a` the
/// objective is `(1 - eta) x + H(y)`, `H(y) = C(y) - (1 - eta) y`, so the
/// optimum is a running maximum of `H` over nodes; ties go to the smallest
/// withdrawal. Also returns the node index of the post-withdrawal account.
pub(crate) fn maximize_on_nodes(spec: &ContractSpec, cont: &ValueGrid) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let keep = 1.0 - spec.penalty;
    let nodes = cont.nodes();
    let c = cont.values();
    let mut values = Vec::with_capacity(nodes.len());
    let mut policy = Vec::with_capacity(nodes.len());
    let mut best_h = f64::NEG_INFINITY;
    let mut best = 0;
    let mut argmax = Vec::with_capacity(nodes.len());
    for (i, (&x, &cx)) in nodes.iter().zip(c).enumerate() {
        let h = cx - keep * x;
        if h >= best_h {
            best_h = h;
            best = i;
        }
        values.push(keep * x + best_h);
        policy.push(x - nodes[best]);
        argmax.push(best);
    }
    (values, policy, argmax)
}

/// Maximises `a (1 - eta) + C(x - a)` over `a` in `[0, x]` for the
/// interpolated continuation grid. The objective is piecewise linear in `a`,
/// so the maximum sits at `a = 0` or at a node; returns `(value, a)` with
/// ties going to the smallest withdrawal.
pub fn maximize_withdrawal(spec: &ContractSpec, cont: &ValueGrid, x: f64) -> (f64, f64) {
    let keep = 1.0 - spec.penalty;
    let nodes = cont.nodes();
    let c = cont.values();
    let m = nodes.partition_point(|&n| n < x);
    let cx = if m < nodes.len() && nodes[m] == x {
        c[m]
    } else {
        cont.interpolate(x)
    };
    let mut best_h = cx - keep * x;
    let mut best_y = x;
    for j in (0..m).rev() {
        let h = c[j] - keep * nodes[j];
        if h > best_h {
            best_h = h;
            best_y = nodes[j];
        }
    }
    (keep * x + best_h, x - best_y)
}

/// Discounted lognormal expectation of `next_grid` from `(t, x)`.
pub fn bs_value_between(t: f64, x: f64, params: &BsParams, next_grid: &ValueGrid) -> Result<f64> {
    let tau = horizon(t, next_grid)?;
    if !(x >= 0.0) {
        return Err(VaError::invalid("x", format!("account value {x} must be >= 0")));
    }
    if tau == 0.0 {
        return Ok(next_grid.interpolate(x));
    }
    let step = LognormalStep::new(tau, params.variance, params.rate)?;
    Ok(next_grid.piecewise_linear().expectation(x, &step))
}

pub(crate) fn horizon(t: f64, next_grid: &ValueGrid) -> Result<f64> {
    let tau = next_grid.time() - t;
    if tau < -1e-12 * next_grid.time().abs().max(1.0) || !tau.is_finite() {
        return Err(VaError::invalid(
            "t",
            format!("{t} is after the grid date {}", next_grid.time()),
        ));
    }
    Ok(tau.max(0.0))
}

/// Two-period date-`t_1` value `sup_a a(1-eta) + (x-a) + P(delta, x-a, G, v)`
/// by a 2001-point scan over `a` refined by golden section on the best cell.
pub fn bs_value_withdrawal_closed(x: f64, params: &BsParams, spec: &ContractSpec) -> Result<PolicyDecision> {
    if spec.n_periods != 2 {
        return Err(VaError::Unsupported(format!(
            "closed-form withdrawal value needs N = 2, got {}",
            spec.n_periods
        )));
    }
    if !(x >= 0.0) {
        return Err(VaError::invalid("x", format!("account value {x} must be >= 0")));
    }
    let keep = 1.0 - spec.penalty;
    let objective = |a: f64| {
        let y = (x - a).max(0.0);
        a * keep + y + put_unchecked(spec.delta, y, spec.guarantee, params.variance, params.rate)
    };
    const SCAN: usize = 2000;
    let mut best_a = 0.0;
    let mut best = objective(0.0);
    let mut best_k = 0;
    for k in 1..=SCAN {
        let a = x * k as f64 / SCAN as f64;
        let j = objective(a);
        if j > best {
            best = j;
            best_a = a;
            best_k = k;
        }
    }
    if x > 0.0 {
        let lo = x * best_k.saturating_sub(1) as f64 / SCAN as f64;
        let hi = x * (best_k + 1).min(SCAN) as f64 / SCAN as f64;
        let (a, j) = golden_section_max(objective, lo, hi, 1e-12 * x.max(1.0));
        if j > best {
            best = j;
            best_a = a;
        }
    }
    Ok(PolicyDecision {
        period: 1,
        state_x: x,
        a_star: best_a,
        value: best,
    })
}

/// Pointwise quasi-BS value: the date-`t_n` Bellman step against `next_grid`
/// (the date-`t_{n+1}` BS value grid) with continuation computed at variance
/// `xi`. Reusable across many `(x, xi)` queries.
#[derive(Debug, Clone)]
pub struct QuasiBs {
    spec: ContractSpec,
    period: usize,
    tau: f64,
    rate: f64,
    next: PiecewiseLinear,
    nodes: Arc<[f64]>,
}

impl QuasiBs {
    pub fn new(spec: &ContractSpec, period: usize, rate: f64, next_grid: &ValueGrid) -> Result<Self> {
        if period >= spec.n_periods {
            return Err(VaError::invalid("n", format!("{period} is not before maturity")));
        }
        let tau = horizon(spec.date(period), next_grid)?;
        Ok(QuasiBs {
            spec: *spec,
            period,
            tau,
            rate,
            next: next_grid.piecewise_linear(),
            nodes: next_grid.shared_nodes(),
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn next_data(&self) -> &PiecewiseLinear {
        &self.next
    }

    pub fn step(&self, xi: f64) -> Result<LognormalStep> {
        LognormalStep::new(self.tau, xi, self.rate)
    }

    /// Continuation `C~(y, xi)` at a single post-withdrawal account value.
    pub fn continuation(&self, y: f64, xi: f64) -> Result<f64> {
        Ok(self.next.expectation(y, &self.step(xi)?))
    }

    pub fn value(&self, x: f64, xi: f64) -> Result<QuasiValue> {
        if !(x >= 0.0) {
            return Err(VaError::invalid("x", format!("account value {x} must be >= 0")));
        }
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(VaError::invalid("xi", format!("{xi} must be > 0")));
        }
        let step = self.step(xi)?;
        if !self.spec.is_withdrawal_date(self.period) {
            return Ok(QuasiValue {
                value: self.next.expectation(x, &step),
                a_tilde: 0.0,
            });
        }
        let keep = 1.0 - self.spec.penalty;
        let nodes = &self.nodes;
        let m = nodes.partition_point(|&n| n < x);
        let cont: Vec<f64> = nodes[..(m + 1).min(nodes.len())]
            .iter()
            .map(|&y| self.next.expectation(y, &step))
            .collect();
        let cx = if m < nodes.len() {
            if nodes[m] == x {
                cont[m]
            } else {
                let (x0, x1) = (nodes[m - 1], nodes[m]);
                cont[m - 1] + (cont[m] - cont[m - 1]) * (x - x0) / (x1 - x0)
            }
        } else {
            let l = nodes.len() - 1;
            cont[l] + (cont[l] - cont[l - 1]) * (x - nodes[l]) / (nodes[l] - nodes[l - 1])
        };
        let mut best_h = cx - keep * x;
        let mut best_y = x;
        for j in (0..m).rev() {
            let h = cont[j] - keep * nodes[j];
            if h > best_h {
                best_h = h;
                best_y = nodes[j];
            }
        }
        Ok(QuasiValue {
            value: keep * x + best_h,
            a_tilde: x - best_y,
        })
    }
}

/// `(V~_n(x, xi), a~_n(x, xi))` against the date-`t_{n+1}` grid.
pub fn quasi_bs_value(spec: &ContractSpec, n: usize, x: f64, xi: f64, rate: f64, next_grid: &ValueGrid) -> Result<QuasiValue> {
    QuasiBs::new(spec, n, rate, next_grid)?.value(x, xi)
}
