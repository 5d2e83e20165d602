//! Heston semi-analytic European prices.

use std::f64::consts::PI;

use num_complex::Complex64;
use std::sync::LazyLock;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VaError};
use crate::numerics::GaussLegendre;

/// Heston dynamics `dX = r X du + sqrt(alpha) X dW1`,
/// `d alpha = kappa (theta - alpha) du + nu sqrt(alpha) dW2`, `dW1 dW2 = rho du`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonParams {
    #[serde(rename = "r")]
    pub rate: f64,
    pub kappa: f64,
    pub theta: f64,
    pub nu: f64,
    pub alpha0: f64,
    pub rho: f64,
}

impl HestonParams {
    /// `r = 0, kappa = 0.1, nu = 0.1, theta = 0.04, alpha0 = 0.04, rho = -0.69`.
    pub fn table1() -> Self {
        HestonParams {
            rate: 0.0,
            kappa: 0.1,
            theta: 0.04,
            nu: 0.1,
            alpha0: 0.04,
            rho: -0.69,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rate.is_finite() {
            return Err(VaError::invalid("r", "must be finite"));
        }
        for (name, v) in [("kappa", self.kappa), ("theta", self.theta), ("nu", self.nu), ("alpha0", self.alpha0)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(VaError::invalid(name, format!("{v} must be >= 0")));
            }
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(VaError::invalid("rho", format!("{} not in [-1, 1]", self.rho)));
        }
        Ok(())
    }

    /// `E[alpha(t)] = alpha0 e^{-kappa t} + theta (1 - e^{-kappa t})`.
    pub fn mean_variance(&self, alpha0: f64, t: f64) -> f64 {
        let e = (-self.kappa * t).exp();
        alpha0 * e + self.theta * (1.0 - e)
    }

    /// `int_0^tau E[alpha(u)] du` from `alpha(0) = var0`.
    pub fn integrated_mean_variance(&self, var0: f64, tau: f64) -> f64 {
        let kt = self.kappa * tau;
        let factor = if kt.abs() < 1e-8 {
            tau * (1.0 - 0.5 * kt)
        } else {
            -(-kt).exp_m1() / self.kappa
        };
        self.theta * tau + (var0 - self.theta) * factor
    }

    /// Characteristic function of `ln(X(tau)/X(0)) - r tau` at complex `u`.
    pub fn log_return_cf(&self, u: Complex64, tau: f64, var0: f64) -> Complex64 {
        let i = Complex64::i();
        let nu = self.nu;
        if nu < 1e-10 {
            let w = self.integrated_mean_variance(var0, tau);
            return (-0.5 * w * (u * u + i * u)).exp();
        }
        let nu2 = nu * nu;
        let beta = self.kappa - self.rho * nu * i * u;
        let d = (beta * beta + nu2 * (i * u + u * u)).sqrt();
        let g = (beta - d) / (beta + d);
        let e = (-d * tau).exp();
        let c = self.kappa * self.theta / nu2 * ((beta - d) * tau - 2.0 * ((1.0 - g * e) / (1.0 - g)).ln());
        let dd = (beta - d) / nu2 * (1.0 - e) / (1.0 - g * e);
        (c + dd * var0).exp()
    }
}

const PANEL: f64 = 200.0;
const MAX_UPPER: f64 = 1.0e5;
static RULE: LazyLock<GaussLegendre> = LazyLock::new(|| GaussLegendre::new(400));

fn check_inputs(tau: f64, spot: f64, var0: f64, strike: f64, params: &HestonParams) -> Result<()> {
    params.validate()?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(VaError::invalid("tau", format!("{tau} must be > 0")));
    }
    if !(spot > 0.0) || !spot.is_finite() {
        return Err(VaError::invalid("spot", format!("{spot} must be > 0")));
    }
    if !(var0 >= 0.0) || !var0.is_finite() {
        return Err(VaError::invalid("var0", format!("{var0} must be >= 0")));
    }
    if !(strike > 0.0) || !strike.is_finite() {
        return Err(VaError::invalid("strike", format!("{strike} must be > 0")));
    }
    Ok(())
}

/// Integrates `f` over `[0, inf)`: panels of width 200 are appended while
/// `tail(upper)` exceeds `tol`.
fn integrate_to_infinity<F, T>(mut f: F, mut tail: T, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    T: FnMut(f64) -> f64,
{
    let mut upper = PANEL;
    let mut total = RULE.integrate(0.0, upper, &mut f);
    loop {
        let t = tail(upper);
        if !t.is_finite() || !total.is_finite() {
            return Err(VaError::IntegrationNotConverged { tail: t });
        }
        if t <= tol {
            return Ok(total);
        }
        if upper >= MAX_UPPER {
            return Err(VaError::IntegrationNotConverged { tail: t });
        }
        let next = (2.0 * upper).min(MAX_UPPER);
        total += RULE.integrate(upper, next, &mut f);
        upper = next;
    }
}

/// Heston European put with the variance currently at `var0`, by the
/// single-integral representation
/// `P = K e^{-r tau} - sqrt(S K) e^{-r tau/2} / pi * int_0^inf Re[e^{iuk} psi(u - i/2)] / (u^2 + 1/4) du`,
/// `k = ln(S/K) + r tau`, `psi` the characteristic function of the
/// discounted log return.
pub fn heston_put(tau: f64, spot: f64, var0: f64, params: &HestonParams, strike: f64) -> Result<f64> {
    check_inputs(tau, spot, var0, strike, params)?;
    let r = params.rate;
    let disc_k = strike * (-r * tau).exp();
    let k = (spot / strike).ln() + r * tau;
    let scale = (spot * strike).sqrt() * (-0.5 * r * tau).exp() / PI;
    let half_i = Complex64::new(0.0, 0.5);
    let integrand = |u: f64| {
        let z = Complex64::new(u, 0.0) - half_i;
        let val = Complex64::new(0.0, u * k).exp() * params.log_return_cf(z, tau, var0);
        val.re / (u * u + 0.25)
    };
    let tail = |u: f64| scale * params.log_return_cf(Complex64::new(u, 0.0) - half_i, tau, var0).norm() / u;
    let integral = integrate_to_infinity(integrand, tail, 1e-12 * strike)?;
    let put = disc_k - scale * integral;
    Ok(put.clamp((disc_k - spot).max(0.0), disc_k))
}

/// Heston European call via the two-probability form `S P1 - K e^{-r tau} P2`.
/// Used as an independent check of [`heston_put`] through put-call parity.
pub fn heston_call(tau: f64, spot: f64, var0: f64, params: &HestonParams, strike: f64) -> Result<f64> {
    check_inputs(tau, spot, var0, strike, params)?;
    let r = params.rate;
    let i = Complex64::i();
    // ln(S_T / K) = m + (discounted log return)
    let m = (spot / strike).ln() + r * tau;
    let prob = |shift: bool| -> Result<f64> {
        let cf = |u: Complex64| {
            let z = if shift { u - i } else { u };
            let base = (i * z * m).exp() * params.log_return_cf(z, tau, var0);
            if shift {
                // divide by E[S_T / K] e^{-m} = 1 (martingale), times e^{-m}
                base * (-m).exp()
            } else {
                base
            }
        };
        let integrand = |u: f64| (cf(Complex64::new(u, 0.0)) / (i * u)).re;
        let tail = |u: f64| cf(Complex64::new(u, 0.0)).norm() / (PI * u);
        Ok(0.5 + integrate_to_infinity(integrand, tail, 1e-13)? / PI)
    };
    let p1 = prob(true)?;
    let p2 = prob(false)?;
    let call = spot * p1 - strike * (-r * tau).exp() * p2;
    Ok(call.clamp((spot - strike * (-r * tau).exp()).max(0.0), spot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs_engine::bs_put;
    use proptest::prelude::*;

    #[test]
    fn degenerate_heston_is_black_scholes() {
        let p = HestonParams {
            rate: 0.02,
            kappa: 1.5,
            theta: 0.04,
            nu: 0.0,
            alpha0: 0.04,
            rho: -0.5,
        };
        for (tau, spot, strike) in [(1.0, 50.0, 50.0), (0.25, 40.0, 50.0), (3.0, 80.0, 50.0), (0.01, 50.0, 50.5)] {
            let h = heston_put(tau, spot, 0.04, &p, strike).unwrap();
            let b = bs_put(tau, spot, strike, 0.04, 0.02).unwrap();
            assert!((h - b).abs() < 1e-8, "tau={tau} spot={spot}: {h} vs {b}");
        }
    }

    #[test]
    fn parity_with_two_probability_call() {
        let p = HestonParams::table1();
        for (spot, var0) in [(50.0, 0.04), (35.0, 0.01), (70.0, 0.12), (50.0, 0.0)] {
            let put = heston_put(1.0, spot, var0, &p, 50.0).unwrap();
            let call = heston_call(1.0, spot, var0, &p, 50.0).unwrap();
            assert!((call - put - (spot - 50.0)).abs() < 1e-10, "spot={spot}: {call} {put}");
        }
    }

    #[test]
    fn deep_out_of_the_money_put_vanishes() {
        let p = HestonParams::table1();
        assert!(heston_put(1.0, 500.0, 0.04, &p, 50.0).unwrap() < 1e-6);
    }

    #[test]
    fn mean_variance_closed_forms() {
        let p = HestonParams::table1();
        assert!((p.mean_variance(0.09, 1.0) - (0.09 * (-0.1f64).exp() + 0.04 * (1.0 - (-0.1f64).exp()))).abs() < 1e-15);
        let num = crate::numerics::GaussLegendre::new(40).integrate(0.0, 2.0, |t| p.mean_variance(0.09, t));
        assert!((p.integrated_mean_variance(0.09, 2.0) - num).abs() < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn monotone_in_spot_and_strike(spot in 20.0..120.0f64, ds in 0.1..10.0f64, strike in 20.0..120.0f64) {
            let p = HestonParams::table1();
            let a = heston_put(1.0, spot, 0.04, &p, strike).unwrap();
            let b = heston_put(1.0, spot + ds, 0.04, &p, strike).unwrap();
            let c = heston_put(1.0, spot, 0.04, &p, strike + ds).unwrap();
            prop_assert!(b <= a + 1e-10);
            prop_assert!(c >= a - 1e-10);
            prop_assert!(a >= (strike - spot).max(0.0) && a <= strike);
        }
    }
}
