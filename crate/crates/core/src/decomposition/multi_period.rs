//! Multi-period decomposition `V = V_BS + V1 + V2 + V3` under a
//! deterministic-variance market, where every conditional expectation is a
//! lognormal expectation on the value grid.

use std::sync::Arc;

use serde::Serialize;

use super::DecompositionReport;
use crate::bs_engine::{bs_solve_bellman, maximize_on_nodes, solve_bellman, BellmanSolution, BsParams, ClaimPricer};
use crate::contract::ContractSpec;
use crate::error::{Result, VaError};
use crate::grid::{transition_weights, GridSpec, LognormalStep, ValueGrid};
use crate::market::DeterministicVolModel;
use crate::numerics::GaussLegendre;

const V1_NODES: usize = 128;

/// Backward-induction results of the multi-period decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct MultiPeriodDecomposition {
    pub report: DecompositionReport,
    /// Implied variance `xi_n` of the date-`t_n` continuation claim, `n = 1..N-1`.
    pub xi: Vec<f64>,
    /// Max over nodes of `|V - (V_BS + V2 + V3)|` at `t_n`, `n = 1..N-1`.
    pub node_residuals: Vec<f64>,
    /// Largest node value of `V3` over all withdrawal dates.
    pub max_v3: f64,
    /// `V2(t_0)` and `V3(t_0)` by forward propagation of the state law.
    pub va_smile_direct: f64,
    pub va_suboptimal_direct: f64,
    #[serde(skip)]
    pub(crate) parts: Parts,
}

#[derive(Debug, Clone)]
pub(crate) struct Parts {
    pub model: DeterministicVolModel,
    pub mark: BellmanSolution,
    pub truth: BellmanSolution,
    /// `V2(t_n, .)` and `V3(t_n, .)` on nodes, `n = 0..=N` (index 0 unused).
    pub v2: Vec<ValueGrid>,
    pub v3: Vec<ValueGrid>,
    /// `Vtilde_n - V_BS(t_n)` and `J_n(., a*) - Vtilde_n` on nodes.
    pub smile_gap: Vec<Vec<f64>>,
    pub policy_gap: Vec<Vec<f64>>,
    /// `a~_n` on nodes.
    pub quasi_policy: Vec<Vec<f64>>,
}

impl MultiPeriodDecomposition {
    pub fn mark(&self) -> &BellmanSolution {
        &self.parts.mark
    }

    pub fn truth(&self) -> &BellmanSolution {
        &self.parts.truth
    }

    pub fn model(&self) -> &DeterministicVolModel {
        &self.parts.model
    }

    pub fn v2_grid(&self, n: usize) -> &ValueGrid {
        &self.parts.v2[n]
    }

    pub fn v3_grid(&self, n: usize) -> &ValueGrid {
        &self.parts.v3[n]
    }

    /// `Vtilde_n(x) - V_BS(t_n, x)` on nodes.
    pub fn smile_gap(&self, n: usize) -> &[f64] {
        &self.parts.smile_gap[n]
    }

    /// `J_n(x, a*) - Vtilde_n(x)` on nodes.
    pub fn policy_gap(&self, n: usize) -> &[f64] {
        &self.parts.policy_gap[n]
    }

    /// True-model optimal withdrawal `a*_n` on nodes.
    pub fn true_policy(&self, n: usize) -> &[f64] {
        self.parts.truth.policy(n)
    }

    /// Quasi-BS optimal withdrawal `a~_n` on nodes.
    pub fn quasi_policy(&self, n: usize) -> &[f64] {
        &self.parts.quasi_policy[n]
    }

    /// `t_0` identity residual.
    pub fn residual(&self) -> f64 {
        self.report.residual
    }

    /// Largest residual over the withdrawal-date grids and `t_0`.
    pub fn max_residual(&self) -> f64 {
        self.node_residuals.iter().fold(self.report.residual.abs(), |m, r| m.max(*r))
    }
}

/// Mean variance of `model` over `[a, b]`.
pub(crate) fn mean_variance(model: &DeterministicVolModel, a: f64, b: f64) -> f64 {
    if b > a {
        model.integrated_variance(a, b) / (b - a)
    } else {
        model.variance_at(a)
    }
}

/// State at which the date-`t_n` claim price is most sensitive to variance.
fn inversion_state(pricer: &ClaimPricer, nodes: &[f64], w: f64) -> Result<f64> {
    let mut best = (f64::NEG_INFINITY, nodes[nodes.len() / 2]);
    for &y in nodes.iter().skip(1).step_by(8) {
        let spread = pricer.price(y, 1.5 * w)? - pricer.price(y, w / 1.5)?;
        if spread > best.0 {
            best = (spread, y);
        }
    }
    Ok(best.1)
}

/// `V1` from `(u, x)`: `int_u^{t_1} e^{-r(s-u)}/2 (w(s) - v) E[X_s^2 Gamma(s, X_s)] ds`
/// with Gauss-Legendre panels between variance breakpoints.
pub(crate) fn realized_adjustment(
    model: &DeterministicVolModel,
    mark_t1: &crate::grid::PiecewiseLinear,
    v: f64,
    u: f64,
    t1: f64,
    x: f64,
    gl: &GaussLegendre,
) -> Result<f64> {
    if t1 <= u {
        return Ok(0.0);
    }
    let r = model.rate;
    let mut cuts = vec![u];
    let mut k = (u / model.period).floor() + 1.0;
    while k * model.period < t1 - 1e-12 {
        if k * model.period > u + 1e-12 {
            cuts.push(k * model.period);
        }
        k += 1.0;
    }
    cuts.push(t1);
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let w = model.variance_at(0.5 * (pair[0] + pair[1]));
        for (s, weight) in gl.on(pair[0], pair[1]) {
            let elapsed = s - u;
            let path_var = mean_variance(model, u, s);
            let rest = LognormalStep::new(t1 - s, v, r)?;
            total += weight
                * 0.5
                * (-r * elapsed).exp()
                * (w - v)
                * mark_t1.expected_dollar_gamma(x, elapsed, path_var, &rest);
        }
    }
    Ok(total)
}

/// Builds every grid of the decomposition for `N >= 2`.
pub(crate) fn decompose(
    model: &DeterministicVolModel,
    spec: &ContractSpec,
    v: f64,
    grid_spec: &GridSpec,
) -> Result<MultiPeriodDecomposition> {
    model.validate()?;
    spec.validate()?;
    let r = model.rate;
    let big_n = spec.n_periods;
    let wbar: Vec<f64> = (0..big_n)
        .map(|n| mean_variance(model, spec.date(n), spec.date(n + 1)))
        .collect();
    let mark = bs_solve_bellman(spec, &BsParams::new(v, r)?, grid_spec)?;
    let truth = solve_bellman(spec, &wbar, r, grid_spec)?;
    let nodes: Arc<[f64]> = mark.value_grid(0).shared_nodes();
    let len = nodes.len();
    let keep = 1.0 - spec.penalty;

    let zero = |n: usize| ValueGrid::new(Arc::clone(&nodes), vec![0.0; len], spec.date(n));
    let mut v2 = vec![zero(0)?; big_n + 1];
    let mut v3 = v2.clone();
    v2[big_n] = zero(big_n)?;
    v3[big_n] = zero(big_n)?;
    let mut smile_gap = vec![Vec::new(); big_n];
    let mut policy_gap = vec![Vec::new(); big_n];
    let mut argmax = vec![Vec::new(); big_n];
    let mut quasi_policy = vec![Vec::new(); big_n];
    let mut xi = vec![0.0; big_n - 1];
    let mut node_residuals = vec![0.0; big_n - 1];
    let mut max_v3 = f64::NEG_INFINITY;

    for n in (1..big_n).rev() {
        let claim = mark.value_grid(n + 1);
        let true_step = truth.step(n);
        let true_claim = claim.propagate(&true_step, spec.date(n))?;
        let pricer = ClaimPricer::new(spec.date(n), r, claim)?;
        let y = inversion_state(&pricer, &nodes, wbar[n])?;
        let xi_n = pricer.implied_variance(true_claim.interpolate(y), y)?;
        xi[n - 1] = xi_n;
        let quasi_cont = claim.propagate(&LognormalStep::new(spec.delta, xi_n, r)?, spec.date(n))?;
        let (quasi_values, a_tilde, _) = maximize_on_nodes(spec, &quasi_cont);
        let (_, _, star) = maximize_on_nodes(spec, truth.continuation_grid(n));

        let c2 = v2[n + 1].propagate(&true_step, spec.date(n))?;
        let c3 = v3[n + 1].propagate(&true_step, spec.date(n))?;
        let mut sg = Vec::with_capacity(len);
        let mut pg = Vec::with_capacity(len);
        let mut v2n = Vec::with_capacity(len);
        let mut v3n = Vec::with_capacity(len);
        for j in 0..len {
            let k = star[j];
            let j_star = keep * nodes[j] + (quasi_cont.values()[k] - keep * nodes[k]);
            sg.push(quasi_values[j] - mark.value_grid(n).values()[j]);
            pg.push(j_star - quasi_values[j]);
            v2n.push(sg[j] + c2.values()[k]);
            v3n.push(pg[j] + c3.values()[k]);
        }
        for j in 0..len {
            let lhs = truth.value_grid(n).values()[j];
            let rhs = mark.value_grid(n).values()[j] + v2n[j] + v3n[j];
            node_residuals[n - 1] = f64::max(node_residuals[n - 1], (lhs - rhs).abs());
            max_v3 = max_v3.max(v3n[j]);
        }
        v2[n] = ValueGrid::new(Arc::clone(&nodes), v2n, spec.date(n))?;
        v3[n] = ValueGrid::new(Arc::clone(&nodes), v3n, spec.date(n))?;
        smile_gap[n] = sg;
        policy_gap[n] = pg;
        argmax[n] = star;
        quasi_policy[n] = a_tilde;
    }

    let x0 = spec.x0;
    let step0 = truth.step(0);
    let t1 = spec.date(1);
    let bs_price = mark.value_at(0, x0)?;
    let true_price = truth.value_at(0, x0)?;
    let va_smile = v2[1].piecewise_linear().expectation(x0, &step0);
    let va_suboptimal = v3[1].piecewise_linear().expectation(x0, &step0);
    let gl = GaussLegendre::new(V1_NODES);
    let mark_t1 = mark.value_grid(1).piecewise_linear();
    let va_realized = realized_adjustment(model, &mark_t1, v, 0.0, t1, x0, &gl)?;

    // forward propagation of the discounted state law under the true policy
    let mut mass = transition_weights(&nodes, x0, &step0);
    let (mut smile_direct, mut sub_direct) = (0.0, 0.0);
    for n in 1..big_n {
        for j in 0..len {
            smile_direct += mass[j] * smile_gap[n][j];
            sub_direct += mass[j] * policy_gap[n][j];
        }
        if n + 1 < big_n {
            let step = truth.step(n);
            let mut next = vec![0.0; len];
            let mut by_node = vec![0.0; len];
            for j in 0..len {
                by_node[argmax[n][j]] += mass[j];
            }
            for (k, &m) in by_node.iter().enumerate() {
                if m != 0.0 {
                    for (acc, w) in next.iter_mut().zip(transition_weights(&nodes, nodes[k], &step)) {
                        *acc += m * w;
                    }
                }
            }
            mass = next;
        }
    }

    Ok(MultiPeriodDecomposition {
        report: DecompositionReport {
            bs_price,
            va_realized,
            va_smile,
            va_suboptimal,
            true_price,
            residual: true_price - (bs_price + va_realized + va_smile + va_suboptimal),
            se_realized: 0.0,
            se_smile: 0.0,
            se_true: 0.0,
            se_residual: 0.0,
            n_paths: 0,
            n_steps: 0,
        },
        xi,
        node_residuals,
        max_v3,
        va_smile_direct: smile_direct,
        va_suboptimal_direct: sub_direct,
        parts: Parts {
            model: model.clone(),
            mark,
            truth,
            v2,
            v3,
            smile_gap,
            policy_gap,
            quasi_policy,
        },
    })
}

/// Backward-induction check of `V = V_BS + V2 + V3` on every withdrawal
/// date and of `V(t_0) = V_BS + V1 + V2 + V3` for a contract with `N >= 3`.
pub fn verify_theorem2(
    model: &DeterministicVolModel,
    spec: &ContractSpec,
    v: f64,
    grid_spec: &GridSpec,
) -> Result<MultiPeriodDecomposition> {
    if spec.n_periods < 3 {
        return Err(VaError::invalid(
            "n_periods",
            format!("multi-period decomposition needs N >= 3, got {}", spec.n_periods),
        ));
    }
    decompose(model, spec, v, grid_spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec3() -> ContractSpec {
        ContractSpec::table2().with_periods(3).unwrap()
    }

    #[test]
    fn identity_holds_for_rising_variance() {
        let model = DeterministicVolModel::new(vec![0.04, 0.09], 1.0, 0.0).unwrap();
        let d = verify_theorem2(&model, &spec3(), 0.04, &GridSpec::default()).unwrap();
        assert!(d.max_residual() < 1e-6, "{:?} {:?}", d.node_residuals, d.report);
        assert!((d.xi[0] - 0.09).abs() < 1e-8 && (d.xi[1] - 0.09).abs() < 1e-8, "{:?}", d.xi);
        assert!(d.max_v3 <= 1e-12, "{}", d.max_v3);
        assert!((d.va_smile_direct - d.report.va_smile).abs() < 1e-8);
        assert!((d.va_suboptimal_direct - d.report.va_suboptimal).abs() < 1e-8);
        // first-period variance equals the mark
        assert!(d.report.va_realized.abs() < 1e-12);
        assert!(d.report.va_smile > 0.0);
        for n in 1..3 {
            for (j, (&a, &b)) in d.true_policy(n).iter().zip(d.quasi_policy(n)).enumerate() {
                if a == b {
                    assert_eq!(d.policy_gap(n)[j], 0.0);
                }
            }
        }
    }

    #[test]
    fn matching_variance_has_no_adjustments() {
        let model = DeterministicVolModel::new(vec![0.04], 1.0, 0.01).unwrap();
        let d = verify_theorem2(&model, &spec3(), 0.04, &GridSpec::default()).unwrap();
        let r = d.report;
        assert!((r.true_price - r.bs_price).abs() <= 1e-10);
        assert!(r.va_realized.abs() <= 1e-10 && r.va_smile.abs() <= 1e-10 && r.va_suboptimal.abs() <= 1e-10);
    }

    #[test]
    fn realized_sign_follows_first_period_variance() {
        for (w0, sign) in [(0.09, 1.0), (0.01, -1.0)] {
            let model = DeterministicVolModel::new(vec![w0, 0.04, 0.06], 1.0, 0.0).unwrap();
            let d = verify_theorem2(&model, &ContractSpec::table2().with_periods(4).unwrap(), 0.04, &GridSpec::default()).unwrap();
            assert!(d.report.va_realized * sign > 0.0);
            assert!(d.max_residual() < 1e-6, "{:?}", d.node_residuals);
            assert!(d.max_v3 <= 1e-12);
        }
    }

    #[test]
    fn low_penalty_contracts() {
        for w in [vec![0.09, 0.01, 0.16], vec![0.04, 0.16, 0.01, 0.09]] {
            let model = DeterministicVolModel::new(w.clone(), 1.0, 0.02).unwrap();
            let spec = ContractSpec { penalty: 0.4, ..ContractSpec::table2() }.with_periods(w.len() + 1).unwrap();
            let d = verify_theorem2(&model, &spec, 0.04, &GridSpec::default()).unwrap();
            assert!(d.max_residual() < 1e-6);
            assert!(d.max_v3 <= 1e-12);
            assert!(d.report.va_smile > 0.0);
            assert!((d.va_smile_direct - d.report.va_smile).abs() < 1e-8);
            assert!((d.va_suboptimal_direct - d.report.va_suboptimal).abs() < 1e-8);
        }
    }

    #[test]
    fn needs_three_periods() {
        let model = DeterministicVolModel::new(vec![0.04], 1.0, 0.0).unwrap();
        assert!(verify_theorem2(&model, &ContractSpec::table2(), 0.04, &GridSpec::default()).is_err());
        assert!(decompose(&model, &ContractSpec::table2(), 0.04, &GridSpec::default()).is_ok());
    }
}
