//! Gauss-Hermite and Gauss-Legendre rules computed by Newton iteration on the
//! orthogonal-polynomial recurrences.

use std::f64::consts::PI;

/// Gauss-Hermite rule normalised for the standard normal:
/// `E[f(Z)] ~= sum_i weights[i] * f(nodes[i])`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let (x, w) = hermite_physicists(n);
        let sqrt_pi = PI.sqrt();
        GaussHermite {
            nodes: x.iter().map(|z| z * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|w| w / sqrt_pi).collect(),
        }
    }

    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

// Orthonormal Hermite recurrence at z: returns (h_n, h_{n-1}, log of the
// factor divided out to keep the values finite).
fn hermite_eval(n: usize, z: f64) -> (f64, f64, f64) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut p1 = PIM4;
    let mut p2 = 0.0;
    let mut log_scale = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
        if p1.abs() > 1e150 {
            p1 *= 1e-150;
            p2 *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    (p1, p2, log_scale)
}

// Nodes/weights for the weight function exp(-x^2), largest node first. Roots
// are bracketed by a sign scan and polished by safeguarded Newton steps.
fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let upper = (2.0 * nf + 1.0).sqrt() + 1.0;
    let step = (0.1 / nf.sqrt()).min(0.05);
    let mut brackets = Vec::with_capacity(n / 2 + 1);
    let mut lo = if n % 2 == 1 { step * 0.5 } else { 0.0 };
    let mut f_lo = hermite_eval(n, lo).0;
    while lo < upper {
        let hi = lo + step;
        let f_hi = hermite_eval(n, hi).0;
        if f_lo == 0.0 || f_lo.signum() != f_hi.signum() {
            brackets.push((lo, hi));
        }
        lo = hi;
        f_lo = f_hi;
    }
    let mut positive: Vec<(f64, f64)> = brackets
        .into_iter()
        .map(|(mut a, mut b)| {
            let mut fa = hermite_eval(n, a).0;
            let mut z = 0.5 * (a + b);
            for _ in 0..100 {
                let (p1, p2, _) = hermite_eval(n, z);
                let dp = (2.0 * nf).sqrt() * p2;
                if p1 == 0.0 {
                    break;
                }
                if p1.signum() == fa.signum() {
                    a = z;
                    fa = p1;
                } else {
                    b = z;
                }
                let newton = z - p1 / dp;
                let next = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
                if (next - z).abs() <= 1e-15 * z.abs().max(1.0) {
                    z = next;
                    break;
                }
                z = next;
            }
            let (_, p2, log_scale) = hermite_eval(n, z);
            let dp = (2.0 * nf).sqrt() * p2;
            let w = (std::f64::consts::LN_2 - 2.0 * dp.abs().ln() - 2.0 * log_scale).exp();
            (z, w)
        })
        .collect();
    positive.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    if n % 2 == 1 {
        let (_, p2, log_scale) = hermite_eval(n, 0.0);
        let dp = (2.0 * nf).sqrt() * p2;
        x[n / 2] = 0.0;
        w[n / 2] = (std::f64::consts::LN_2 - 2.0 * dp.abs().ln() - 2.0 * log_scale).exp();
    }
    assert_eq!(positive.len(), n / 2, "Gauss-Hermite root scan missed roots for n = {n}");
    for (i, &(z, wi)) in positive.iter().enumerate() {
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&z, &w)| (mid + half * z, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}
