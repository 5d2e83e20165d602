//! Two-period decomposition `V(t_0) = V_BS + V1 + V2` on simulated paths,
//! and its quadrature counterpart for a Black-Scholes market at another
//! variance.

use rayon::prelude::*;

use super::DecompositionReport;
use crate::bs_engine::{bs_solve_bellman, BsParams};
use crate::contract::ContractSpec;
use crate::error::{Result, VaError};
use crate::grid::{GridSpec, LognormalStep};
use crate::hedging::ContractValuation;
use crate::market::{Market, PathSet};
use crate::numerics::GaussLegendre;
use crate::stats::Estimate;

/// Per-path terms of the two-period decomposition.
#[derive(Debug, Clone, Default)]
pub struct TwoPeriodSamples {
    /// `sum_i e^{-r u_i}/2 Gamma_i [(dX_i)^2 - v X_i^2 du]`.
    pub realized: Vec<f64>,
    /// Same with `alpha_i X_i^2 du` for the quadratic variation; empty when
    /// the paths carry no variance.
    pub realized_alpha: Vec<f64>,
    pub xi1: Vec<f64>,
    /// `e^{-r t_1} [V_BS(t_1, X_1, xi_1) - V_BS(t_1, X_1, v)]`.
    pub smile: Vec<f64>,
    /// `e^{-r t_1} V_BS(t_1, X_1, xi_1)`.
    pub true_value: Vec<f64>,
}

fn check_span(paths: &PathSet, valuation: &ContractValuation) -> Result<()> {
    if paths.n_paths() == 0 {
        return Err(VaError::invalid("paths", "empty path set"));
    }
    let t1 = valuation.spec().date(1);
    let times = paths.times();
    if times[0] != 0.0 || (times[paths.n_steps()] - t1).abs() > 1e-9 * t1.max(1.0) {
        return Err(VaError::invalid("paths", format!("must span [0, {t1}]")));
    }
    Ok(())
}

fn realized_terms(paths: &PathSet, valuation: &ContractValuation) -> Result<(Vec<f64>, Vec<f64>)> {
    check_span(paths, valuation)?;
    let surface = valuation.surface_for(paths)?;
    let r = valuation.params().rate;
    let v = valuation.params().variance;
    let du = paths.dt();
    let with_alpha = paths.has_variance();
    let pairs: Vec<(f64, f64)> = (0..paths.n_paths())
        .into_par_iter()
        .map(|m| {
            let p = paths.path(m);
            let (mut qv, mut alpha) = (0.0, 0.0);
            for i in 0..p.n_steps() {
                let x = p.asset[i];
                let gamma = surface.greeks(i, x).map_err(|e| e.on_path(m))?.gamma;
                let w = 0.5 * (-r * p.times[i]).exp() * gamma;
                let dx = p.asset[i + 1] - x;
                qv += w * (dx * dx - v * x * x * du);
                if with_alpha {
                    alpha += w * (p.variance.map_or(v, |a| a[i]) - v) * x * x * du;
                }
            }
            Ok((qv, alpha))
        })
        .collect::<Result<_>>()?;
    let (qv, alpha): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((qv, if with_alpha { alpha } else { Vec::new() }))
}

fn terminal_terms(paths: &PathSet, valuation: &ContractValuation, market: &Market) -> Result<Vec<(f64, f64, f64)>> {
    check_span(paths, valuation)?;
    let v = valuation.params().variance;
    let disc = (-valuation.params().rate * valuation.spec().date(1)).exp();
    (0..paths.n_paths())
        .into_par_iter()
        .map(|m| {
            let p = paths.path(m);
            let x1 = p.terminal();
            let inner = || -> Result<(f64, f64, f64)> {
                let xi = valuation.implied_variance_t1(market, x1, p.terminal_variance())?;
                let at_xi = valuation.value_t1(x1, xi)?;
                let at_v = valuation.value_t1(x1, v)?;
                Ok((xi, disc * (at_xi - at_v), disc * at_xi))
            };
            inner().map_err(|e| e.on_path(m))
        })
        .collect()
}

/// All per-path terms in one pass.
pub fn two_period_samples(paths: &PathSet, valuation: &ContractValuation, market: &Market) -> Result<TwoPeriodSamples> {
    let (realized, realized_alpha) = realized_terms(paths, valuation)?;
    let terminal = terminal_terms(paths, valuation, market)?;
    Ok(TwoPeriodSamples {
        realized,
        realized_alpha,
        xi1: terminal.iter().map(|t| t.0).collect(),
        smile: terminal.iter().map(|t| t.1).collect(),
        true_value: terminal.iter().map(|t| t.2).collect(),
    })
}

/// Monte Carlo `V1(t_0)` with `(dX)^2` as the quadratic-variation increment.
pub fn estimate_v1(paths: &PathSet, valuation: &ContractValuation) -> Result<Estimate> {
    Ok(Estimate::from_samples(&realized_terms(paths, valuation)?.0))
}

/// Monte Carlo `V1(t_0)` with `alpha X^2 du` as the quadratic-variation
/// increment; needs paths that carry the variance state.
pub fn estimate_v1_alpha(paths: &PathSet, valuation: &ContractValuation) -> Result<Estimate> {
    if !paths.has_variance() {
        return Err(VaError::Unsupported("paths carry no variance state".into()));
    }
    Ok(Estimate::from_samples(&realized_terms(paths, valuation)?.1))
}

/// Monte Carlo `V2(t_0)`.
pub fn estimate_v2(paths: &PathSet, valuation: &ContractValuation, market: &Market) -> Result<Estimate> {
    let t = terminal_terms(paths, valuation, market)?;
    Ok(Estimate::from_samples(&t.iter().map(|t| t.1).collect::<Vec<_>>()))
}

fn require_two_periods(spec: &ContractSpec) -> Result<()> {
    if spec.n_periods != 2 {
        return Err(VaError::invalid(
            "n_periods",
            format!("two-period decomposition needs N = 2, got {}", spec.n_periods),
        ));
    }
    Ok(())
}

/// Monte Carlo `V(t_0) = E[e^{-r t_1} V_BS(t_1, X_1, xi_1)]`.
pub fn true_price_two_period(paths: &PathSet, valuation: &ContractValuation, market: &Market) -> Result<Estimate> {
    require_two_periods(valuation.spec())?;
    let t = terminal_terms(paths, valuation, market)?;
    Ok(Estimate::from_samples(&t.iter().map(|t| t.2).collect::<Vec<_>>()))
}

/// Report of `V(t_0) - (V_BS + V1 + V2)` on the paths. The residual's SE
/// comes from its per-path samples.
pub fn verify_theorem1(paths: &PathSet, valuation: &ContractValuation, market: &Market) -> Result<DecompositionReport> {
    require_two_periods(valuation.spec())?;
    let s = two_period_samples(paths, valuation, market)?;
    let bs_price = valuation.bs_price()?;
    let residual: Vec<f64> = (0..s.true_value.len())
        .map(|m| s.true_value[m] - bs_price - s.realized[m] - s.smile[m])
        .collect();
    let v1 = Estimate::from_samples(&s.realized);
    let v2 = Estimate::from_samples(&s.smile);
    let tv = Estimate::from_samples(&s.true_value);
    let res = Estimate::from_samples(&residual);
    Ok(DecompositionReport {
        bs_price,
        va_realized: v1.value,
        va_smile: v2.value,
        va_suboptimal: 0.0,
        true_price: tv.value,
        residual: res.value,
        se_realized: v1.se,
        se_smile: v2.se,
        se_true: tv.se,
        se_residual: res.se,
        n_paths: paths.n_paths(),
        n_steps: paths.n_steps(),
    })
}

/// Gauss-Legendre nodes for the time integral of `V1`.
const V1_NODES: usize = 128;

/// Every term of the two-period decomposition for a Black-Scholes market at
/// variance `w`, marked at `v`, by exact lognormal expectations and a
/// Gauss-Legendre time integral.
pub fn theorem1_quadrature(spec: &ContractSpec, w: f64, v: f64, rate: f64, grid_spec: &GridSpec) -> Result<DecompositionReport> {
    require_two_periods(spec)?;
    let mark = bs_solve_bellman(spec, &BsParams::new(v, rate)?, grid_spec)?;
    let truth = bs_solve_bellman(spec, &BsParams::new(w, rate)?, grid_spec)?;
    let t1 = spec.date(1);
    let x0 = spec.x0;
    let law = LognormalStep::new(t1, w, rate)?;
    let mark_t1 = mark.value_grid(1).piecewise_linear();
    let true_t1 = truth.value_grid(1).piecewise_linear();
    let bs_price = mark_t1.expectation(x0, &LognormalStep::new(t1, v, rate)?);
    let true_price = true_t1.expectation(x0, &law);
    let va_smile = true_price - mark_t1.expectation(x0, &law);
    let gl = GaussLegendre::new(V1_NODES);
    let mut va_realized = 0.0;
    for (u, weight) in gl.on(0.0, t1) {
        let rest = LognormalStep::new(t1 - u, v, rate)?;
        va_realized += weight * 0.5 * (-rate * u).exp() * (w - v) * mark_t1.expected_dollar_gamma(x0, u, w, &rest);
    }
    Ok(DecompositionReport {
        bs_price,
        va_realized,
        va_smile,
        va_suboptimal: 0.0,
        true_price,
        residual: true_price - (bs_price + va_realized + va_smile),
        se_realized: 0.0,
        se_smile: 0.0,
        se_true: 0.0,
        se_residual: 0.0,
        n_paths: 0,
        n_steps: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valuation(v: f64) -> ContractValuation {
        ContractValuation::new(&ContractSpec::table2(), &BsParams::new(v, 0.0).unwrap(), &GridSpec::default()).unwrap()
    }

    #[test]
    fn quadrature_identity_for_bs_markets() {
        let spec = ContractSpec::table2();
        for w in [0.01, 0.04, 0.09] {
            let rep = theorem1_quadrature(&spec, w, 0.04, 0.0, &GridSpec::default()).unwrap();
            assert!(rep.residual.abs() < 1e-6, "w={w}: {rep:?}");
            if w > 0.04 {
                assert!(rep.va_realized > 0.0 && rep.va_smile > 0.0);
            }
            if w == 0.04 {
                assert!(rep.va_realized.abs() < 1e-12 && rep.va_smile.abs() < 1e-12);
            }
        }
        let rep = theorem1_quadrature(&spec, 0.09, 0.04, 0.02, &GridSpec::default()).unwrap();
        assert!(rep.residual.abs() < 1e-6, "{rep:?}");
    }

    #[test]
    fn matching_market_gives_zero_smile_per_path() {
        let val = valuation(0.04);
        let market = Market::Bs { variance: 0.04, rate: 0.0 };
        let paths = market.simulate(50.0, 1.0, 20, 200, 3).unwrap();
        let s = two_period_samples(&paths, &val, &market).unwrap();
        for (&xi, &sm) in s.xi1.iter().zip(&s.smile) {
            assert!((xi - 0.04).abs() < 1e-6, "xi={xi}");
            assert!(sm.abs() < 1e-8);
        }
        assert!(s.realized_alpha.is_empty());
        assert!(estimate_v1_alpha(&paths, &val).is_err());
    }

    #[test]
    fn bs_market_estimates_match_quadrature() {
        let spec = ContractSpec::table2();
        let val = valuation(0.04);
        let market = Market::Bs { variance: 0.09, rate: 0.0 };
        let paths = market.simulate(50.0, 1.0, 50, 4000, 11).unwrap();
        let oracle = theorem1_quadrature(&spec, 0.09, 0.04, 0.0, &GridSpec::default()).unwrap();
        let v2 = estimate_v2(&paths, &val, &market).unwrap();
        assert!((v2.value - oracle.va_smile).abs() < 3.0 * v2.se, "{v2:?} vs {}", oracle.va_smile);
        let tp = true_price_two_period(&paths, &val, &market).unwrap();
        assert!((tp.value - oracle.true_price).abs() < 3.0 * tp.se);
        let rep = verify_theorem1(&paths, &val, &market).unwrap();
        assert!(rep.va_realized > 0.0);
        assert!(rep.residual.abs() < rep.tolerance(0.005), "{rep:?}");
    }

    #[test]
    fn rejects_more_than_two_periods() {
        let spec = ContractSpec::table2().with_periods(3).unwrap();
        assert!(theorem1_quadrature(&spec, 0.09, 0.04, 0.0, &GridSpec::default()).is_err());
    }
}
