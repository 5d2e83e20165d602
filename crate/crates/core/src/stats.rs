//! Sample statistics with a fixed summation order.

use serde::Serialize;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Estimate {
        let n = samples.len();
        if n == 0 {
            return Estimate {
                value: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = mean(samples);
        let se = if n > 1 { std_dev(samples) / (n as f64).sqrt() } else { 0.0 };
        Estimate { value: mean, se }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn fraction_positive(xs: &[f64]) -> f64 {
    xs.iter().filter(|&&x| x > 0.0).count() as f64 / xs.len() as f64
}

/// Equal-width histogram; `edges` has one more entry than `counts`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `bins` equal bins spanning the sample range.
    pub fn new(xs: &[f64], bins: usize) -> Histogram {
        let bins = bins.max(1);
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        };
        Histogram::with_range(xs, bins, lo, hi)
    }

    pub fn with_range(xs: &[f64], bins: usize, lo: f64, hi: f64) -> Histogram {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &x in xs {
            if x < lo || x > hi || !x.is_finite() {
                continue;
            }
            let i = (((x - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}
