use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bellman::{bs_value_between, horizon};
use super::BsParams;
use crate::error::{Result, VaError};
use crate::grid::ValueGrid;
use crate::numerics::{norm_cdf, norm_pdf, GaussHermite};

/// How the likelihood-ratio expectation is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrMode {
    /// Gauss-Hermite quadrature with the given number of nodes.
    Quadrature { nodes: usize },
    /// Closed-form integral of the score against the piecewise-linear data.
    Exact,
    /// Plain Monte Carlo with the given sample count.
    Sampled { paths: usize, seed: u64 },
}

impl Default for LrMode {
    fn default() -> Self {
        LrMode::Quadrature { nodes: 64 }
    }
}

/// Likelihood-ratio delta
/// `E[exp(-r tau) / (x sqrt(v tau)) * d * V(t_1, X(t_1))]`, where `d` is the
/// standardised log-return of `X(t_1)` over `tau = t_1 - u`.
pub fn bs_delta_lr(u: f64, x: f64, params: &BsParams, t1_grid: &ValueGrid, mode: LrMode) -> Result<f64> {
    let tau = horizon(u, t1_grid)?;
    if tau <= 0.0 {
        return Err(VaError::invalid("u", format!("{u} must be before {}", t1_grid.time())));
    }
    if !(x > 0.0) {
        return Err(VaError::invalid("x", format!("{x} must be > 0")));
    }
    let r = params.rate;
    let s = (params.variance * tau).sqrt();
    let mu = (r - 0.5 * params.variance) * tau;
    let weight = (-r * tau).exp() / (x * s);
    let score_mean = match mode {
        LrMode::Quadrature { nodes } => {
            if nodes == 0 {
                return Err(VaError::invalid("nodes", "must be >= 1"));
            }
            GaussHermite::new(nodes).expect(|z| z * t1_grid.interpolate(x * (mu + s * z).exp()))
        }
        LrMode::Exact => {
            let pl = t1_grid.piecewise_linear();
            let growth = (r * tau).exp();
            // E[Z X] + sum_k jump_k E[Z (X - k)^+]
            let mut acc = pl.initial_slope() * x * s * growth;
            for (k, jump) in pl.kinks() {
                let z0 = ((k / x).ln() - mu) / s;
                let upper = x * growth * (norm_pdf(z0 - s) + s * norm_cdf(s - z0));
                acc += jump * (upper - k * norm_pdf(z0));
            }
            acc
        }
        LrMode::Sampled { paths, seed } => {
            if paths == 0 {
                return Err(VaError::invalid("paths", "must be >= 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sum = 0.0;
            for _ in 0..paths {
                let z: f64 = StandardNormal.sample(&mut rng);
                sum += z * t1_grid.interpolate(x * (mu + s * z).exp());
            }
            sum / paths as f64
        }
    };
    Ok(weight * score_mean)
}

/// Central first difference of the between-dates value, `h = max(x, 1) 1e-4`.
pub fn bs_delta_fd(u: f64, x: f64, params: &BsParams, t1_grid: &ValueGrid) -> Result<f64> {
    let h = x.max(1.0) * 1e-4;
    if !(x > h) {
        return Err(VaError::invalid("x", format!("{x} must exceed the step {h}")));
    }
    let up = bs_value_between(u, x + h, params, t1_grid)?;
    let dn = bs_value_between(u, x - h, params, t1_grid)?;
    Ok((up - dn) / (2.0 * h))
}

/// Central second difference of the between-dates value.
pub fn bs_gamma_fd(u: f64, x: f64, params: &BsParams, t1_grid: &ValueGrid, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(VaError::invalid("h", format!("{h} must be > 0")));
    }
    if !(h < x) {
        return Err(VaError::invalid("h", format!("{h} must be below x = {x}")));
    }
    if horizon(u, t1_grid)? <= 0.0 {
        return Err(VaError::invalid("u", format!("{u} must be before {}", t1_grid.time())));
    }
    let up = bs_value_between(u, x + h, params, t1_grid)?;
    let mid = bs_value_between(u, x, params, t1_grid)?;
    let dn = bs_value_between(u, x - h, params, t1_grid)?;
    Ok((up - 2.0 * mid + dn) / (h * h))
}
