use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::heston::{heston_put, HestonParams};
use super::pathset::PathSet;
use crate::contract::ContractSpec;
use crate::error::{Result, VaError};
use crate::grid::{LognormalStep, ValueGrid};

/// Black-Scholes market whose variance is constant on each contract period:
/// `variance_per_period[n]` applies on `(t_n, t_{n+1}]`. Periods past the end
/// of the list reuse its last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicVolModel {
    pub variance_per_period: Vec<f64>,
    pub period: f64,
    pub rate: f64,
}

impl DeterministicVolModel {
    pub fn new(variance_per_period: Vec<f64>, period: f64, rate: f64) -> Result<Self> {
        let m = DeterministicVolModel {
            variance_per_period,
            period,
            rate,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variance_per_period.is_empty() {
            return Err(VaError::invalid("w", "needs at least one period variance"));
        }
        if let Some(w) = self.variance_per_period.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(VaError::invalid("w", format!("{w} must be > 0")));
        }
        if !(self.period > 0.0) {
            return Err(VaError::invalid("delta", "period must be > 0"));
        }
        if !self.rate.is_finite() {
            return Err(VaError::invalid("r", "must be finite"));
        }
        Ok(())
    }

    /// Variance on `(t_n, t_{n+1}]`.
    pub fn period_variance(&self, n: usize) -> f64 {
        let w = &self.variance_per_period;
        w[n.min(w.len() - 1)]
    }

    /// Variances for the first `n_periods` periods.
    pub fn period_variances(&self, n_periods: usize) -> Vec<f64> {
        (0..n_periods).map(|n| self.period_variance(n)).collect()
    }

    /// Instantaneous variance just after `t`.
    pub fn variance_at(&self, t: f64) -> f64 {
        let n = (t / self.period + 1e-12).floor().max(0.0) as usize;
        self.period_variance(n)
    }

    /// `int_a^b w(t) dt`.
    pub fn integrated_variance(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut t = a;
        while t < b {
            let n = (t / self.period + 1e-12).floor().max(0.0) as usize;
            let end = ((n + 1) as f64 * self.period).min(b);
            total += self.period_variance(n) * (end - t);
            if end <= t {
                break;
            }
            t = end;
        }
        total
    }
}

/// A true-model market.
#[derive(Debug, Clone, PartialEq)]
pub enum Market {
    Bs { variance: f64, rate: f64 },
    Heston(HestonParams),
    DetVol(DeterministicVolModel),
}

impl Market {
    pub fn rate(&self) -> f64 {
        match self {
            Market::Bs { rate, .. } => *rate,
            Market::Heston(p) => p.rate,
            Market::DetVol(m) => m.rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Market::Bs { variance, rate } => crate::bs_engine::BsParams::new(*variance, *rate).map(|_| ()),
            Market::Heston(p) => p.validate(),
            Market::DetVol(m) => m.validate(),
        }
    }

    /// Short description used in cache keys.
    pub fn descriptor(&self) -> String {
        format!("{self:?}")
    }

    pub fn simulate(&self, x0: f64, horizon: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<PathSet> {
        match self {
            Market::Bs { variance, rate } => simulate_bs(*variance, *rate, x0, horizon, n_steps, n_paths, seed),
            Market::Heston(p) => simulate_heston(p, x0, horizon, n_steps, n_paths, seed),
            Market::DetVol(m) => simulate_detvol(m, x0, horizon, n_steps, n_paths, seed),
        }
    }
}

fn check_grid(x0: f64, horizon: f64, n_steps: usize, n_paths: usize) -> Result<()> {
    if !(x0 > 0.0) || !x0.is_finite() {
        return Err(VaError::invalid("x0", format!("{x0} must be > 0")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(VaError::invalid("horizon", format!("{horizon} must be > 0")));
    }
    if n_steps == 0 {
        return Err(VaError::invalid("n_steps", "must be >= 1"));
    }
    if n_paths == 0 {
        return Err(VaError::invalid("n_paths", "must be >= 1"));
    }
    Ok(())
}

/// Independent stream per path: identical `(seed, path)` gives an identical
/// path whatever the number of paths.
fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn times(horizon: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|i| horizon * i as f64 / n_steps as f64).collect()
}

/// Full-truncation Euler scheme for the Heston model; the log asset is
/// stepped with the truncated variance, the stored variance is truncated at 0.
pub fn simulate_heston(
    params: &HestonParams,
    x0: f64,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    params.validate()?;
    check_grid(x0, horizon, n_steps, n_paths)?;
    let du = horizon / n_steps as f64;
    let sq_du = du.sqrt();
    let rho_perp = (1.0 - params.rho * params.rho).max(0.0).sqrt();
    let width = n_steps + 1;
    let mut asset = vec![0.0; n_paths * width];
    let mut variance = vec![0.0; n_paths * width];
    asset
        .par_chunks_mut(width)
        .zip(variance.par_chunks_mut(width))
        .enumerate()
        .for_each(|(m, (xs, vs))| {
            let mut rng = path_rng(seed, m);
            let mut ln_x = x0.ln();
            let mut alpha = params.alpha0;
            xs[0] = x0;
            vs[0] = alpha.max(0.0);
            for i in 1..width {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let zp: f64 = StandardNormal.sample(&mut rng);
                let z2 = params.rho * z1 + rho_perp * zp;
                let a = alpha.max(0.0);
                let sa = a.sqrt();
                ln_x += (params.rate - 0.5 * a) * du + sa * sq_du * z1;
                alpha += params.kappa * (params.theta - a) * du + params.nu * sa * sq_du * z2;
                xs[i] = ln_x.exp();
                vs[i] = alpha.max(0.0);
            }
        });
    PathSet::new(times(horizon, n_steps), asset, Some(variance), n_paths, seed, "heston-full-truncation-euler")
}

/// Exact lognormal paths at constant variance.
pub fn simulate_bs(
    variance: f64,
    rate: f64,
    x0: f64,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    let model = DeterministicVolModel::new(vec![variance], horizon, rate)?;
    let mut ps = simulate_detvol(&model, x0, horizon, n_steps, n_paths, seed)?;
    ps.drop_variance("bs-exact-lognormal");
    Ok(ps)
}

fn simulate_detvol(
    model: &DeterministicVolModel,
    x0: f64,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    model.validate()?;
    check_grid(x0, horizon, n_steps, n_paths)?;
    let t = times(horizon, n_steps);
    let steps: Vec<(f64, f64)> = t
        .windows(2)
        .map(|w| {
            let iv = model.integrated_variance(w[0], w[1]);
            ((model.rate * (w[1] - w[0]) - 0.5 * iv), iv.sqrt())
        })
        .collect();
    let inst: Vec<f64> = t.iter().map(|&u| model.variance_at(u)).collect();
    let width = n_steps + 1;
    let mut asset = vec![0.0; n_paths * width];
    let mut variance = vec![0.0; n_paths * width];
    asset
        .par_chunks_mut(width)
        .zip(variance.par_chunks_mut(width))
        .enumerate()
        .for_each(|(m, (xs, vs))| {
            let mut rng = path_rng(seed, m);
            let mut ln_x = x0.ln();
            xs[0] = x0;
            for (i, &(drift, sd)) in steps.iter().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                ln_x += drift + sd * z;
                xs[i + 1] = ln_x.exp();
            }
            vs.copy_from_slice(&inst);
        });
    PathSet::new(t, asset, Some(variance), n_paths, seed, "detvol-exact-lognormal")
}

/// Discounted date-`t_n` expectation, under the true model, of the claim
/// paying `claim` at its date, from account `x` (and variance state
/// `alpha` for Heston).
///
/// Black-Scholes and deterministic-variance markets price any grid claim
/// exactly. Heston supports the maturity payoff `max(X, G)` only, priced as
/// `x e^{...}` forward plus a Heston put.
pub fn conditional_claim_price(
    market: &Market,
    t_n: f64,
    x: f64,
    alpha: Option<f64>,
    spec: &ContractSpec,
    claim: &ValueGrid,
) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(VaError::invalid("x", format!("account value {x} must be >= 0")));
    }
    let tau = claim.time() - t_n;
    if !(tau > 0.0) {
        return Err(VaError::invalid("t_n", "must be before the claim date"));
    }
    match market {
        Market::Bs { variance, rate } => {
            let step = LognormalStep::new(tau, *variance, *rate)?;
            Ok(claim.piecewise_linear().expectation(x, &step))
        }
        Market::DetVol(m) => {
            let iv = m.integrated_variance(t_n, claim.time());
            let step = LognormalStep::new(tau, iv / tau, m.rate)?;
            Ok(claim.piecewise_linear().expectation(x, &step))
        }
        Market::Heston(p) => {
            let is_terminal = (claim.time() - spec.maturity()).abs() <= 1e-12 * spec.maturity().max(1.0)
                && claim
                    .nodes()
                    .iter()
                    .zip(claim.values())
                    .all(|(&y, &v)| (v - y.max(spec.guarantee)).abs() <= 1e-12 * v.abs().max(1.0));
            if !is_terminal {
                return Err(VaError::Unsupported(
                    "Heston conditional prices are available for the maturity payoff only".into(),
                ));
            }
            let alpha = alpha.ok_or_else(|| VaError::invalid("alpha", "Heston state needs the variance"))?;
            if x == 0.0 {
                return Ok(spec.guarantee * (-p.rate * tau).exp());
            }
            if spec.guarantee == 0.0 {
                return Ok(x);
            }
            Ok(x + heston_put(tau, x, alpha, p, spec.guarantee)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs_engine::bs_put;
    use crate::grid::GridSpec;

    fn mean_se(xs: impl Iterator<Item = f64>) -> (f64, f64) {
        let v: Vec<f64> = xs.collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn heston_paths_are_reproducible_and_path_count_independent() {
        let p = HestonParams::table1();
        let a = simulate_heston(&p, 50.0, 1.0, 20, 8, 42).unwrap();
        let b = simulate_heston(&p, 50.0, 1.0, 20, 8, 42).unwrap();
        let c = simulate_heston(&p, 50.0, 1.0, 20, 3, 42).unwrap();
        assert_eq!(a, b);
        for m in 0..3 {
            assert_eq!(a.path(m).asset, c.path(m).asset);
            assert_eq!(a.path(m).variance, c.path(m).variance);
        }
        let d = simulate_heston(&p, 50.0, 1.0, 20, 8, 43).unwrap();
        assert_ne!(a.path(0).asset, d.path(0).asset);
    }

    #[test]
    fn degenerate_heston_matches_lognormal_moments() {
        let p = HestonParams {
            rate: 0.01,
            kappa: 2.0,
            theta: 0.04,
            nu: 0.0,
            alpha0: 0.04,
            rho: -0.7,
        };
        let ps = simulate_heston(&p, 50.0, 1.0, 50, 20_000, 5).unwrap();
        for m in 0..ps.n_paths() {
            assert!(ps.path(m).variance.unwrap().iter().all(|&v| (v - 0.04).abs() < 1e-15));
        }
        let (mean, se) = mean_se((0..ps.n_paths()).map(|m| ps.path(m).asset[50]));
        assert!((mean - 50.0 * 0.01f64.exp()).abs() < 3.0 * se);
        let (m2, se2) = mean_se((0..ps.n_paths()).map(|m| ps.path(m).asset[50].ln()));
        assert!((m2 - (50f64.ln() + 0.01 - 0.02)).abs() < 3.0 * se2);
        let sd = {
            let v: Vec<f64> = (0..ps.n_paths()).map(|m| ps.path(m).asset[50].ln()).collect();
            (v.iter().map(|x| (x - m2).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        assert!((sd - 0.2).abs() < 0.004, "{sd}");
    }

    #[test]
    fn discounted_asset_is_a_martingale_on_every_date() {
        for market in [
            Market::Heston(HestonParams { rate: 0.03, ..HestonParams::table1() }),
            Market::Bs { variance: 0.09, rate: 0.02 },
        ] {
            let ps = market.simulate(50.0, 1.0, 10, 20_000, 9).unwrap();
            for i in 0..=10 {
                let t = ps.times()[i];
                let (m, se) = mean_se((0..ps.n_paths()).map(|p| (-market.rate() * t).exp() * ps.path(p).asset[i]));
                assert!((m - 50.0).abs() < 3.0 * se.max(1e-12), "{market:?} i={i}: {m} ± {se}");
            }
        }
    }

    #[test]
    fn quadratic_variation_matches_integrated_variance() {
        let ps = simulate_heston(&HestonParams::table1(), 50.0, 1.0, 250, 4_000, 21).unwrap();
        let diffs = (0..ps.n_paths()).map(|m| {
            let p = ps.path(m);
            let v = p.variance.unwrap();
            let du = 1.0 / 250.0;
            (0..250)
                .map(|i| ((p.asset[i + 1] - p.asset[i]) / p.asset[i]).powi(2) - v[i] * du)
                .sum::<f64>()
        });
        let (m, se) = mean_se(diffs);
        assert!(m.abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn detvol_integrates_piecewise_variance() {
        let m = DeterministicVolModel::new(vec![0.04, 0.09], 1.0, 0.0).unwrap();
        assert!((m.integrated_variance(0.5, 1.5) - (0.02 + 0.045)).abs() < 1e-15);
        assert!((m.integrated_variance(1.0, 3.0) - 0.18).abs() < 1e-15);
        assert_eq!(m.period_variance(5), 0.09);
        assert_eq!(m.variance_at(0.0), 0.04);
        assert_eq!(m.variance_at(1.0), 0.09);
        assert!(DeterministicVolModel::new(vec![], 1.0, 0.0).is_err());
        assert!(DeterministicVolModel::new(vec![0.04, -1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn conditional_prices() {
        let spec = ContractSpec::table2();
        let nodes = GridSpec::default().nodes(&spec).unwrap();
        let g = ValueGrid::from_fn(nodes.clone(), 2.0, |x| x.max(50.0)).unwrap();
        let bs = Market::Bs { variance: 0.09, rate: 0.0 };
        let c = conditional_claim_price(&bs, 1.0, 50.0, None, &spec, &g).unwrap();
        assert!((c - (50.0 + bs_put(1.0, 50.0, 50.0, 0.09, 0.0).unwrap())).abs() < 1e-12);
        let h = Market::Heston(HestonParams::table1());
        let c = conditional_claim_price(&h, 1.0, 50.0, Some(0.04), &spec, &g).unwrap();
        let put = heston_put(1.0, 50.0, 0.04, &HestonParams::table1(), 50.0).unwrap();
        assert!((c - 50.0 - put).abs() < 1e-12);
        assert!(conditional_claim_price(&h, 1.0, 50.0, None, &spec, &g).is_err());
        let other = ValueGrid::from_fn(nodes, 2.0, |x| x).unwrap();
        assert!(matches!(
            conditional_claim_price(&h, 1.0, 50.0, Some(0.04), &spec, &other),
            Err(VaError::Unsupported(_))
        ));
        let dv = Market::DetVol(DeterministicVolModel::new(vec![0.04, 0.09], 1.0, 0.0).unwrap());
        let c = conditional_claim_price(&dv, 1.0, 61.0, None, &spec, &g).unwrap();
        let direct = g.piecewise_linear().expectation(61.0, &LognormalStep::new(1.0, 0.09, 0.0).unwrap());
        assert_eq!(c, direct);
    }
}
