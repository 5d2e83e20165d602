//! Value functions on an account-value grid.
//!
//! A [`ValueGrid`] is read as the piecewise-linear interpolant of its node
//! values, extended linearly beyond the last node. Because the one-period
//! account dynamics are lognormal, the discounted expectation of such an
//! interpolant is available in closed form: writing the interpolant as
//! `f0 + s0 * y + sum_k jump_k * (y - k)^+` turns the expectation into a sum
//! of Black-Scholes calls ([`PiecewiseLinear`]). [`transition_weights`] gives
//! the same operator as explicit weights on node values (hat-function route),
//! which the forward-measure computations use.

use std::sync::Arc;

use crate::contract::ContractSpec;
use crate::error::{Result, VaError};
use crate::numerics::{norm_cdf, norm_pdf};

/// Kinks further than this many standard deviations from the forward are
/// treated as deep in or out of the money.
const BAND: f64 = 9.0;

/// Total variances below this are treated as a deterministic transition.
const MIN_TOTAL_VARIANCE: f64 = 1e-300;

/// Discretisation of the account-value axis.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Number of uniformly spaced nodes on `[0, x_max]`.
    pub n_nodes: usize,
    /// `x_max = x_max_multiple * max(x0, G)`.
    pub x_max_multiple: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_nodes: 801,
            x_max_multiple: 6.0,
        }
    }
}

impl GridSpec {
    /// Uniform nodes on `[0, x_max]` with the guarantee and the initial account
    /// inserted so that payoff kinks and the inception state sit on nodes.
    pub fn nodes(&self, spec: &ContractSpec) -> Result<Arc<[f64]>> {
        if self.n_nodes < 4 {
            return Err(VaError::GridTooCoarse(self.n_nodes));
        }
        if !(self.x_max_multiple > 1.0) {
            return Err(VaError::invalid(
                "x_max_multiple",
                format!("{} must be > 1", self.x_max_multiple),
            ));
        }
        let x_max = self.x_max_multiple * spec.x0.max(spec.guarantee);
        let h = x_max / (self.n_nodes - 1) as f64;
        let mut nodes: Vec<f64> = (0..self.n_nodes).map(|i| i as f64 * h).collect();
        for extra in [spec.guarantee, spec.x0] {
            if extra > 0.0 && extra < x_max {
                let tol = 1e-9 * h;
                if !nodes.iter().any(|&x| (x - extra).abs() <= tol) {
                    nodes.push(extra);
                }
            }
        }
        nodes.sort_by(|a, b| a.total_cmp(b));
        Ok(nodes.into())
    }
}

/// Lognormal one-period transition `X = x exp((r - var/2) tau + sqrt(var tau) Z)`
/// with discounting at `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalStep {
    pub tau: f64,
    pub variance: f64,
    pub rate: f64,
}

impl LognormalStep {
    pub fn new(tau: f64, variance: f64, rate: f64) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(VaError::invalid("tau", format!("{tau} must be >= 0")));
        }
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(VaError::invalid("variance", format!("{variance} must be >= 0")));
        }
        if !rate.is_finite() {
            return Err(VaError::invalid("rate", "must be finite"));
        }
        Ok(LognormalStep {
            tau,
            variance,
            rate,
        })
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.tau).exp()
    }

    fn total_variance(&self) -> f64 {
        self.variance * self.tau
    }
}

/// Value, first and second derivative of an expectation in the start state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Greeks {
    pub value: f64,
    pub delta: f64,
    pub gamma: f64,
}

/// Node values of a function of the account value at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    nodes: Arc<[f64]>,
    values: Vec<f64>,
    time: f64,
}

impl ValueGrid {
    pub fn new(nodes: Arc<[f64]>, values: Vec<f64>, time: f64) -> Result<Self> {
        if nodes.len() < 4 {
            return Err(VaError::GridTooCoarse(nodes.len()));
        }
        if nodes.len() != values.len() {
            return Err(VaError::invalid(
                "values",
                format!("{} values for {} nodes", values.len(), nodes.len()),
            ));
        }
        if nodes[0] != 0.0 {
            return Err(VaError::invalid("nodes", "first node must be 0"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(VaError::invalid("nodes", "must be strictly ascending"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VaError::NonFinite("value grid"));
        }
        Ok(ValueGrid {
            nodes,
            values,
            time,
        })
    }

    /// Samples `f` on the nodes.
    pub fn from_fn<F: FnMut(f64) -> f64>(nodes: Arc<[f64]>, time: f64, mut f: F) -> Result<Self> {
        let values = nodes.iter().map(|&x| f(x)).collect();
        ValueGrid::new(nodes, values, time)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn shared_nodes(&self) -> Arc<[f64]> {
        Arc::clone(&self.nodes)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index `i` with `nodes[i] <= x < nodes[i + 1]`, clamped to the last segment.
    pub(crate) fn segment(&self, x: f64) -> usize {
        let i = self.nodes.partition_point(|&n| n <= x);
        i.saturating_sub(1).min(self.nodes.len() - 2)
    }

    /// Piecewise-linear interpolation, extended linearly beyond the last node.
    pub fn interpolate(&self, x: f64) -> f64 {
        let i = self.segment(x.max(0.0));
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    }

    /// Slope of the interpolant at `x` (right derivative at nodes).
    pub fn slope(&self, x: f64) -> f64 {
        let i = self.segment(x.max(0.0));
        (self.values[i + 1] - self.values[i]) / (self.nodes[i + 1] - self.nodes[i])
    }

    /// Changes of slope at the interior nodes; all nonnegative iff the
    /// interpolant is convex.
    pub fn slope_changes(&self) -> Vec<f64> {
        let s: Vec<f64> = self
            .nodes
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| (v[1] - v[0]) / (x[1] - x[0]))
            .collect();
        s.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn piecewise_linear(&self) -> PiecewiseLinear {
        PiecewiseLinear::from_grid(self)
    }

    /// Discounted expectation of this grid one lognormal step ahead, evaluated
    /// at every node; the result is labelled with `time`.
    pub fn propagate(&self, step: &LognormalStep, time: f64) -> Result<ValueGrid> {
        let pl = self.piecewise_linear();
        let values = self.nodes.iter().map(|&x| pl.expectation(x, step)).collect();
        ValueGrid::new(self.shared_nodes(), values, time)
    }

    pub fn map<F: FnMut(f64, f64) -> f64>(&self, mut f: F) -> Result<ValueGrid> {
        let values = self
            .nodes
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| f(x, v))
            .collect();
        ValueGrid::new(self.shared_nodes(), values, self.time)
    }
}

/// `f(y) = f0 + s0 * y + sum_k jump_k * (y - k)^+` for `y >= 0`.
#[derive(Debug, Clone)]
pub struct PiecewiseLinear {
    f0: f64,
    s0: f64,
    strikes: Vec<f64>,
    ln_strikes: Vec<f64>,
    jumps: Vec<f64>,
    // prefix sums over kinks: sum jump, sum jump * strike
    cum_jump: Vec<f64>,
    cum_jump_strike: Vec<f64>,
    grid: ValueGrid,
}

impl PiecewiseLinear {
    pub fn from_grid(grid: &ValueGrid) -> Self {
        let x = grid.nodes();
        let v = grid.values();
        let slopes: Vec<f64> = (0..x.len() - 1)
            .map(|j| (v[j + 1] - v[j]) / (x[j + 1] - x[j]))
            .collect();
        let mut strikes = Vec::with_capacity(x.len());
        let mut jumps = Vec::with_capacity(x.len());
        for j in 1..x.len() - 1 {
            let jump = slopes[j] - slopes[j - 1];
            if jump != 0.0 {
                strikes.push(x[j]);
                jumps.push(jump);
            }
        }
        let ln_strikes = strikes.iter().map(|k: &f64| k.ln()).collect();
        let mut cum_jump = vec![0.0; jumps.len() + 1];
        let mut cum_jump_strike = vec![0.0; jumps.len() + 1];
        for i in 0..jumps.len() {
            cum_jump[i + 1] = cum_jump[i] + jumps[i];
            cum_jump_strike[i + 1] = cum_jump_strike[i] + jumps[i] * strikes[i];
        }
        PiecewiseLinear {
            f0: v[0],
            s0: slopes[0],
            strikes,
            ln_strikes,
            jumps,
            cum_jump,
            cum_jump_strike,
            grid: grid.clone(),
        }
    }

    pub fn kink_count(&self) -> usize {
        self.jumps.len()
    }

    pub fn kinks(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.strikes.iter().copied().zip(self.jumps.iter().copied())
    }

    pub fn intercept(&self) -> f64 {
        self.f0
    }

    pub fn initial_slope(&self) -> f64 {
        self.s0
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.grid.interpolate(y)
    }

    /// Kink index range `[lo, hi)` inside the band; kinks below `lo` are deep
    /// in the money.
    #[inline]
    fn band(&self, a: f64, s: f64) -> (usize, usize) {
        let lo = self.ln_strikes.partition_point(|&lk| lk < a - BAND * s);
        let hi = self.ln_strikes.partition_point(|&lk| lk <= a + BAND * s);
        (lo, hi.max(lo))
    }

    /// `E[exp(-r tau) f(X)]` with `X` started at `x`.
    pub fn expectation(&self, x: f64, step: &LognormalStep) -> f64 {
        let disc = step.discount();
        let w = step.total_variance();
        if x <= 0.0 {
            return disc * self.f0;
        }
        if w < MIN_TOTAL_VARIANCE {
            let fwd = x * (step.rate * step.tau).exp();
            return disc * self.eval(fwd);
        }
        let s = w.sqrt();
        let a = x.ln() + step.rate * step.tau + 0.5 * w;
        let (lo, hi) = self.band(a, s);
        let mut value =
            disc * self.f0 + self.s0 * x + x * self.cum_jump[lo] - disc * self.cum_jump_strike[lo];
        for k in lo..hi {
            let d1 = (a - self.ln_strikes[k]) / s;
            let call = x * norm_cdf(d1) - disc * self.strikes[k] * norm_cdf(d1 - s);
            value += self.jumps[k] * call;
        }
        value
    }

    /// Expectation together with its first two derivatives in `x`.
    pub fn greeks(&self, x: f64, step: &LognormalStep) -> Greeks {
        let disc = step.discount();
        let w = step.total_variance();
        if x <= 0.0 {
            return Greeks {
                value: disc * self.f0,
                delta: self.s0,
                gamma: 0.0,
            };
        }
        if w < MIN_TOTAL_VARIANCE {
            let fwd = x * (step.rate * step.tau).exp();
            return Greeks {
                value: disc * self.eval(fwd),
                delta: self.grid.slope(fwd),
                gamma: 0.0,
            };
        }
        let s = w.sqrt();
        let a = x.ln() + step.rate * step.tau + 0.5 * w;
        let (lo, hi) = self.band(a, s);
        let mut value =
            disc * self.f0 + self.s0 * x + x * self.cum_jump[lo] - disc * self.cum_jump_strike[lo];
        let mut delta = self.s0 + self.cum_jump[lo];
        let mut gamma = 0.0;
        for k in lo..hi {
            let d1 = (a - self.ln_strikes[k]) / s;
            let nd1 = norm_cdf(d1);
            let j = self.jumps[k];
            value += j * (x * nd1 - disc * self.strikes[k] * norm_cdf(d1 - s));
            delta += j * nd1;
            gamma += j * norm_pdf(d1);
        }
        Greeks {
            value,
            delta,
            gamma: gamma / (x * s),
        }
    }

    /// `E[X^2 * gamma(u, X)]` where `X` is lognormal from `x0` over `elapsed`
    /// with variance `path_variance`, and `gamma` is the second derivative of
    /// the expectation of `f` over the remaining `step.tau` at `step.variance`.
    /// Closed form by Gaussian convolution, per kink.
    pub fn expected_dollar_gamma(&self, x0: f64, elapsed: f64, path_variance: f64, step: &LognormalStep) -> f64 {
        let r = step.rate;
        let m = x0.ln() + (r - 0.5 * path_variance) * elapsed;
        let s2 = path_variance * elapsed;
        let a2 = step.variance * step.tau;
        let total = (a2 + s2).sqrt();
        if total <= 0.0 {
            return 0.0;
        }
        let scale = x0 * (r * elapsed).exp() / total;
        self.kinks()
            .map(|(k, jump)| {
                let c = k.ln() - (r + 0.5 * step.variance) * step.tau;
                jump * scale * norm_pdf((m + s2 - c) / total)
            })
            .sum()
    }
}

/// Weights `w_j` with `sum_j w_j * values[j] = E[exp(-r tau) f(X)]` for the
/// piecewise-linear interpolant `f` of any values on `nodes`.
pub fn transition_weights(nodes: &[f64], x: f64, step: &LognormalStep) -> Vec<f64> {
    let n = nodes.len();
    let disc = step.discount();
    let mut w = vec![0.0; n];
    let w_total = step.total_variance();
    if x <= 0.0 || w_total < MIN_TOTAL_VARIANCE {
        let y = if x <= 0.0 { 0.0 } else { x * (step.rate * step.tau).exp() };
        let i = nodes.partition_point(|&v| v <= y).saturating_sub(1).min(n - 2);
        let lam = (y - nodes[i]) / (nodes[i + 1] - nodes[i]);
        w[i] = disc * (1.0 - lam);
        w[i + 1] = disc * lam;
        return w;
    }
    let s = w_total.sqrt();
    let fwd = x * (step.rate * step.tau).exp();
    let ln_x = x.ln();
    // P(X <= k) and E[X; X <= k] at every node
    let mut cdf = vec![0.0; n];
    let mut partial = vec![0.0; n];
    for j in 1..n {
        let d1 = (ln_x - nodes[j].ln() + step.rate * step.tau + 0.5 * w_total) / s;
        cdf[j] = norm_cdf(-(d1 - s));
        partial[j] = fwd * norm_cdf(-d1);
    }
    for j in 0..n - 1 {
        let d_f = cdf[j + 1] - cdf[j];
        let d_g = partial[j + 1] - partial[j];
        let c = (d_g - nodes[j] * d_f) / (nodes[j + 1] - nodes[j]);
        w[j] += d_f - c;
        w[j + 1] += c;
    }
    let last = n - 1;
    let d_f = 1.0 - cdf[last];
    let d_g = fwd - partial[last];
    let c = (d_g - nodes[last] * d_f) / (nodes[last] - nodes[last - 1]);
    w[last] += d_f + c;
    w[last - 1] -= c;
    for v in &mut w {
        *v *= disc;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::GaussHermite;

    fn nodes() -> Arc<[f64]> {
        GridSpec::default().nodes(&ContractSpec::table2()).unwrap()
    }

    fn bs_call(x: f64, k: f64, tau: f64, v: f64, r: f64) -> f64 {
        let s = (v * tau).sqrt();
        let d1 = ((x / k).ln() + (r + 0.5 * v) * tau) / s;
        x * norm_cdf(d1) - k * (-r * tau).exp() * norm_cdf(d1 - s)
    }

    #[test]
    fn nodes_include_guarantee_and_x0() {
        let spec = ContractSpec {
            x0: 47.3,
            ..ContractSpec::table2()
        };
        let n = GridSpec::default().nodes(&spec).unwrap();
        assert!(n.contains(&50.0));
        assert!(n.contains(&47.3));
        assert_eq!(n[0], 0.0);
        assert!((n[n.len() - 1] - 300.0).abs() < 1e-12);
        assert!(n.windows(2).all(|w| w[1] > w[0]));
        assert!(matches!(
            GridSpec { n_nodes: 3, x_max_multiple: 6.0 }.nodes(&spec),
            Err(VaError::GridTooCoarse(3))
        ));
    }

    #[test]
    fn grid_validation() {
        let n: Arc<[f64]> = vec![0.0, 1.0, 2.0].into();
        assert!(matches!(ValueGrid::new(n, vec![0.0; 3], 0.0), Err(VaError::GridTooCoarse(3))));
        let n: Arc<[f64]> = vec![0.0, 1.0, 1.0, 2.0].into();
        assert!(ValueGrid::new(n, vec![0.0; 4], 0.0).is_err());
        let n: Arc<[f64]> = vec![0.0, 1.0, 2.0, 3.0].into();
        assert!(ValueGrid::new(n.clone(), vec![0.0, f64::NAN, 0.0, 0.0], 0.0).is_err());
        assert!(ValueGrid::new(n, vec![0.0; 4], 0.0).is_ok());
    }

    #[test]
    fn interpolation_extends_linearly() {
        let n: Arc<[f64]> = vec![0.0, 1.0, 2.0, 4.0].into();
        let g = ValueGrid::new(n, vec![1.0, 2.0, 2.0, 6.0], 0.0).unwrap();
        assert_eq!(g.interpolate(0.5), 1.5);
        assert_eq!(g.interpolate(3.0), 4.0);
        assert_eq!(g.interpolate(6.0), 10.0);
        assert_eq!(g.slope_changes(), vec![-1.0, 2.0]);
    }

    #[test]
    fn terminal_payoff_expectation_is_forward_plus_put() {
        let spec = ContractSpec::table2();
        let g = ValueGrid::from_fn(nodes(), 2.0, |x| spec.terminal_payoff(x).unwrap()).unwrap();
        let pl = g.piecewise_linear();
        assert_eq!(pl.kink_count(), 1);
        for (x, v, r) in [(50.0, 0.04, 0.0), (30.0, 0.09, 0.02), (120.0, 0.25, 0.05)] {
            let step = LognormalStep::new(1.0, v, r).unwrap();
            let k = 50.0;
            let put = bs_call(x, k, 1.0, v, r) - x + k * (-r).exp();
            let got = pl.expectation(x, &step);
            assert!((got - (x + put)).abs() < 1e-12, "x={x}: {got} vs {}", x + put);
        }
    }

    #[test]
    fn kink_sum_matches_hermite_quadrature_on_smooth_data() {
        // a smooth convex function sampled on the grid; compare the exact
        // expectation of its interpolant with quadrature of the interpolant
        let g = ValueGrid::from_fn(nodes(), 1.0, |x| (x / 40.0).powi(2) + 0.3 * x).unwrap();
        let pl = g.piecewise_linear();
        let gh = GaussHermite::new(200);
        let step = LognormalStep::new(0.5, 0.04, 0.01).unwrap();
        let x = 60.0;
        let s = (0.04f64 * 0.5).sqrt();
        let mu = (0.01 - 0.02) * 0.5;
        let quad = (-0.005f64).exp() * gh.expect(|z| g.interpolate(x * (mu + s * z).exp()));
        assert!((pl.expectation(x, &step) - quad).abs() < 1e-6);
    }

    #[test]
    fn greeks_match_finite_differences() {
        let spec = ContractSpec::table2();
        let g = ValueGrid::from_fn(nodes(), 1.0, |x| {
            0.4 * x + (50.0f64).max(0.6 * x + (50.0 - x).max(0.0))
        })
        .unwrap();
        let pl = g.piecewise_linear();
        let step = LognormalStep::new(0.7, 0.04, 0.0).unwrap();
        for x in [20.0, spec.x0, 83.0, 140.0] {
            let gk = pl.greeks(x, &step);
            let h = 1e-3 * x;
            let up = pl.expectation(x + h, &step);
            let dn = pl.expectation(x - h, &step);
            let mid = pl.expectation(x, &step);
            assert!((gk.value - mid).abs() < 1e-12);
            assert!((gk.delta - (up - dn) / (2.0 * h)).abs() < 1e-6);
            assert!((gk.gamma - (up - 2.0 * mid + dn) / (h * h)).abs() < 1e-5);
        }
    }

    #[test]
    fn degenerate_and_empty_account() {
        let g = ValueGrid::from_fn(nodes(), 1.0, |x| (x - 50.0).abs() + 3.0).unwrap();
        let pl = g.piecewise_linear();
        let step = LognormalStep::new(1.0, 0.0, 0.0).unwrap();
        assert!((pl.expectation(42.0, &step) - g.interpolate(42.0)).abs() < 1e-12);
        let step = LognormalStep::new(1.0, 0.04, 0.03).unwrap();
        assert!((pl.expectation(0.0, &step) - 53.0 * (-0.03f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn hat_weights_agree_with_kink_sum() {
        let g = ValueGrid::from_fn(nodes(), 1.0, |x| {
            (x / 30.0).sin() * 5.0 + 0.8 * x + (45.0 - x).max(0.0)
        })
        .unwrap();
        let pl = g.piecewise_linear();
        for (x, v, r) in [(50.0, 0.04, 0.0), (10.0, 0.09, 0.03), (250.0, 0.2, 0.0), (0.0, 0.04, 0.01)] {
            let step = LognormalStep::new(1.0, v, r).unwrap();
            let w = transition_weights(g.nodes(), x, &step);
            let via_weights: f64 = w.iter().zip(g.values()).map(|(a, b)| a * b).sum();
            assert!((via_weights - pl.expectation(x, &step)).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn expected_dollar_gamma_matches_quadrature() {
        let g = ValueGrid::from_fn(nodes(), 1.0, |x| {
            0.4 * x + (50.0f64).max(0.6 * x + (50.0 - x).max(0.0))
        })
        .unwrap();
        let pl = g.piecewise_linear();
        let (x0, u, w, v, r) = (50.0, 0.4, 0.09, 0.04, 0.02);
        let step = LognormalStep::new(1.0 - u, v, r).unwrap();
        let closed = pl.expected_dollar_gamma(x0, u, w, &step);
        let gh = GaussHermite::new(400);
        let s = (w * u).sqrt();
        let quad = gh.expect(|z| {
            let x = x0 * ((r - 0.5 * w) * u + s * z).exp();
            x * x * pl.greeks(x, &step).gamma
        });
        assert!((closed - quad).abs() < 1e-8 * closed.abs().max(1.0), "{closed} vs {quad}");
    }
}
