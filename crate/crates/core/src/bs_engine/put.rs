use crate::error::{Result, VaError};
use crate::numerics::{norm_cdf, norm_pdf};

fn check(tau: f64, spot: f64, strike: f64, v: f64) -> Result<()> {
    for (name, val) in [("tau", tau), ("spot", spot), ("strike", strike), ("v", v)] {
        if !(val >= 0.0) || !val.is_finite() {
            return Err(VaError::invalid(name, format!("{val} must be a finite number >= 0")));
        }
    }
    Ok(())
}

/// Black-Scholes European put.
pub fn bs_put(tau: f64, spot: f64, strike: f64, v: f64, r: f64) -> Result<f64> {
    check(tau, spot, strike, v)?;
    Ok(put_unchecked(tau, spot, strike, v, r))
}

/// Black-Scholes European call.
pub fn bs_call(tau: f64, spot: f64, strike: f64, v: f64, r: f64) -> Result<f64> {
    check(tau, spot, strike, v)?;
    let disc_k = strike * (-r * tau).exp();
    let w = v * tau;
    if spot == 0.0 {
        return Ok(0.0);
    }
    if strike == 0.0 {
        return Ok(spot);
    }
    if w <= 0.0 {
        return Ok((spot - disc_k).max(0.0));
    }
    let s = w.sqrt();
    let d1 = ((spot / strike).ln() + r * tau + 0.5 * w) / s;
    Ok(spot * norm_cdf(d1) - disc_k * norm_cdf(d1 - s))
}

/// Second spot derivative of the put (same as the call).
pub fn bs_put_gamma(tau: f64, spot: f64, strike: f64, v: f64, r: f64) -> Result<f64> {
    check(tau, spot, strike, v)?;
    let w = v * tau;
    if spot == 0.0 || strike == 0.0 || w <= 0.0 {
        return Ok(0.0);
    }
    let s = w.sqrt();
    let d1 = ((spot / strike).ln() + r * tau + 0.5 * w) / s;
    Ok(norm_pdf(d1) / (spot * s))
}

pub(crate) fn put_unchecked(tau: f64, spot: f64, strike: f64, v: f64, r: f64) -> f64 {
    let disc_k = strike * (-r * tau).exp();
    let w = v * tau;
    if strike == 0.0 {
        return 0.0;
    }
    if spot == 0.0 {
        return disc_k;
    }
    if w <= 0.0 {
        return (disc_k - spot).max(0.0);
    }
    let s = w.sqrt();
    let d1 = ((spot / strike).ln() + r * tau + 0.5 * w) / s;
    let p = disc_k * norm_cdf(-(d1 - s)) - spot * norm_cdf(-d1);
    p.clamp((disc_k - spot).max(0.0), disc_k)
}
