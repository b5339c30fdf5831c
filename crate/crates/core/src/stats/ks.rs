//! One-sample Kolmogorov–Smirnov test.
//!
//! Parameters are usually estimated from the same samples that are tested,
//! which makes the plain asymptotic p-value conservative (too large). That
//! bias is accepted here deliberately; no Lilliefors-type correction is made.

use serde::{Deserialize, Serialize};

use super::Distribution;

pub const DEFAULT_SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Pass,
    Rejected,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Pass => "Pass",
            Decision::Rejected => "Rejected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub decision: Decision,
    pub significance: f64,
    pub n: usize,
}

/// D_n = sup |F_n − F| over the sample, using both one-sided gaps at every
/// order statistic.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov survival function Q(λ) = P(K > λ).
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // P(K ≤ λ) = √(2π)/λ · Σ exp(−(2k−1)²π²/(8λ²))
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..200 {
            let m = (2 * k - 1) as f64;
            let term = (c * m * m).exp();
            sum += term;
            if term < 1e-12 * sum.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        // Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)
        let mut sum = 0.0;
        for k in 1..200 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-12 * sum.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        2.0 * sum
    };
    p.clamp(0.0, 1.0)
}

pub fn ks_pvalue(statistic: f64, n: usize) -> f64 {
    kolmogorov_survival((n as f64).sqrt() * statistic)
}

pub fn ks_test(samples: &[f64], dist: &Distribution) -> KsReport {
    ks_test_at(samples, dist, DEFAULT_SIGNIFICANCE)
}

pub fn ks_test_at(samples: &[f64], dist: &Distribution, significance: f64) -> KsReport {
    let statistic = ks_statistic(samples, |x| dist.cdf(x));
    let p_value = ks_pvalue(statistic, samples.len());
    KsReport {
        statistic,
        p_value,
        decision: if p_value >= significance {
            Decision::Pass
        } else {
            Decision::Rejected
        },
        significance,
        n: samples.len(),
    }
}
