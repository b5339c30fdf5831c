use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, gamma as gamma_fn};

use super::ks::{ks_test_at, KsReport};
use super::optimize::{nelder_mead, newton_polish, NelderMeadOptions};
use super::special::trigamma;
use super::{Distribution, Family};
use crate::error::{Error, Result};
use crate::signal::mean_std;

/// Replacement for exact zeros in samples handed to positive-support
/// families (typically produced by `shift_positive`).
pub const ZERO_NUDGE: f64 = 1e-12;
const MIN_SAMPLES: usize = 10;
const NEWTON_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedDistribution {
    pub dist: Distribution,
    /// Log-likelihood at the estimate, over the samples actually fitted
    /// (after any zero nudge).
    pub loglik: f64,
    pub n: usize,
}

impl FittedDistribution {
    pub fn family(&self) -> Family {
        self.dist.family()
    }
}

/// Samples as a given family sees them.
fn prepare(samples: &[f64], family: Family) -> Result<Vec<f64>> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{family} fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain {
            family,
            message: format!("non-finite sample {x}"),
        });
    }
    if family.needs_positive() {
        if let Some(x) = samples.iter().find(|&&x| x < 0.0) {
            return Err(Error::Domain {
                family,
                message: format!("negative sample {x}"),
            });
        }
        return Ok(samples
            .iter()
            .map(|&x| if x == 0.0 { ZERO_NUDGE } else { x })
            .collect());
    }
    Ok(samples.to_vec())
}

fn sample_range(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Affine map of the data into [ε, 1−ε] with ε = 1/(2n).
fn beta_support(x: &[f64]) -> Result<(f64, f64)> {
    let (min, max) = sample_range(x);
    if max <= min {
        return Err(Error::Domain {
            family: Family::Beta,
            message: "all samples are equal".into(),
        });
    }
    let eps = 0.5 / x.len() as f64;
    let width = (max - min) / (1.0 - 2.0 * eps);
    let lo = min - eps * width;
    Ok((lo, lo + width))
}

fn spread_or_domain(x: &[f64], family: Family) -> Result<(f64, f64)> {
    let (m, s) = mean_std(x);
    if s > 0.0 && s.is_finite() {
        Ok((m, s))
    } else {
        Err(Error::Domain {
            family,
            message: "samples have zero spread".into(),
        })
    }
}

/// Method-of-moments starting point (probability-weighted moments for GEV).
pub fn initial_estimate(samples: &[f64], family: Family) -> Result<Distribution> {
    let x = prepare(samples, family)?;
    initial_from_prepared(&x, family)
}

fn initial_from_prepared(x: &[f64], family: Family) -> Result<Distribution> {
    let (m, s) = spread_or_domain(x, family)?;
    let v = s * s;
    Ok(match family {
        Family::Normal => Distribution::Normal { mu: m, sigma: s },
        Family::Exponential => Distribution::Exponential { mu: m },
        Family::Lognormal => {
            let s2 = (1.0 + v / (m * m)).ln();
            Distribution::Lognormal {
                mu: m.ln() - s2 / 2.0,
                sigma: s2.sqrt(),
            }
        }
        Family::Gamma => Distribution::Gamma {
            a: m * m / v,
            b: v / m,
        },
        Family::Weibull => {
            let b = (s / m).powf(-1.086).clamp(0.05, 500.0);
            Distribution::Weibull {
                a: m / gamma_fn(1.0 + 1.0 / b),
                b,
            }
        }
        Family::Beta => {
            let (lo, hi) = beta_support(x)?;
            let u: Vec<f64> = x.iter().map(|v| (v - lo) / (hi - lo)).collect();
            let (mu, su) = mean_std(&u);
            let common = (mu * (1.0 - mu) / (su * su) - 1.0).max(1e-3);
            Distribution::Beta {
                a: mu * common,
                b: (1.0 - mu) * common,
                lo,
                hi,
            }
        }
        Family::ExtremeValue => {
            let sigma = s * 6.0_f64.sqrt() / std::f64::consts::PI;
            Distribution::ExtremeValue {
                mu: m + 0.577_215_664_901_532_9 * sigma,
                sigma,
            }
        }
        Family::Gev => gev_pwm(x),
        Family::StudentT => {
            let n = x.len() as f64;
            let m4 = x.iter().map(|y| (y - m).powi(4)).sum::<f64>() / n;
            let excess = m4 / (v * v) - 3.0;
            let nu = if excess > 0.0 {
                (4.0 + 6.0 / excess).min(200.0)
            } else {
                200.0
            };
            Distribution::StudentT {
                mu: m,
                sigma: s * ((nu - 2.0) / nu).sqrt(),
                nu,
            }
        }
    })
}

/// Hosking's probability-weighted-moment estimator, converted to the
/// `k > 0 = heavy tail` sign convention.
fn gev_pwm(x: &[f64]) -> Distribution {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut b0 = 0.0;
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        let j = i as f64;
        b0 += v;
        b1 += j / (n - 1.0) * v;
        b2 += j * (j - 1.0) / ((n - 1.0) * (n - 2.0)) * v;
    }
    b0 /= n;
    b1 /= n;
    b2 /= n;
    let c = (2.0 * b1 - b0) / (3.0 * b2 - b0) - 2f64.ln() / 3f64.ln();
    let kh = 7.8590 * c + 2.9554 * c * c;
    let (sigma, mu) = if kh.abs() < 1e-8 {
        let sigma = (2.0 * b1 - b0) / 2f64.ln();
        (sigma, b0 - 0.577_215_664_901_532_9 * sigma)
    } else {
        let g = gamma_fn(1.0 + kh);
        let sigma = (2.0 * b1 - b0) * kh / (g * (1.0 - 2f64.powf(-kh)));
        (sigma, b0 + sigma * (g - 1.0) / kh)
    };
    Distribution::Gev { k: -kh, sigma, mu }
}

/// Maximum-likelihood estimate for one family.
pub fn fit_mle(samples: &[f64], family: Family) -> Result<FittedDistribution> {
    let x = prepare(samples, family)?;
    let (m, s) = spread_or_domain(&x, family)?;
    let n = x.len();
    let nf = n as f64;
    let dist = match family {
        Family::Normal => Distribution::Normal { mu: m, sigma: s },
        Family::Exponential => Distribution::Exponential { mu: m },
        Family::Lognormal => {
            let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
            let (mu, sigma) = mean_std(&logs);
            if sigma == 0.0 {
                return Err(Error::Domain {
                    family,
                    message: "log-samples have zero spread".into(),
                });
            }
            Distribution::Lognormal { mu, sigma }
        }
        Family::Gamma => {
            let mean_log = x.iter().map(|v| v.ln()).sum::<f64>() / nf;
            let target = m.ln() - mean_log;
            let a = solve_gamma_shape(target)?;
            Distribution::Gamma { a, b: m / a }
        }
        Family::Weibull => fit_weibull(&x)?,
        Family::Beta => fit_beta(&x)?,
        Family::ExtremeValue => fit_gumbel_min(&x, m, s)?,
        Family::Gev | Family::StudentT => fit_simplex(&x, family, m, s)?,
    };
    if !dist.is_valid() {
        return Err(Error::Convergence {
            family,
            iterations: 0,
        });
    }
    let loglik = dist.log_likelihood(&x);
    Ok(FittedDistribution { dist, loglik, n })
}

/// Solve ln a − ψ(a) = target for the Gamma shape.
fn solve_gamma_shape(target: f64) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::Domain {
            family: Family::Gamma,
            message: "samples have zero spread on the log scale".into(),
        });
    }
    let mut a = (3.0 - target + ((target - 3.0).powi(2) + 24.0 * target).sqrt()) / (12.0 * target);
    for _ in 0..NEWTON_MAX_ITER {
        let f = a.ln() - digamma(a) - target;
        let df = 1.0 / a - trigamma(a);
        let mut next = a - f / df;
        if next <= 0.0 {
            next = a / 2.0;
        }
        if (next - a).abs() <= 1e-14 * a {
            return Ok(next);
        }
        a = next;
    }
    Err(Error::Convergence {
        family: Family::Gamma,
        iterations: NEWTON_MAX_ITER,
    })
}

fn fit_weibull(x: &[f64]) -> Result<Distribution> {
    // Scale by the maximum so that x^B stays bounded for large shapes.
    let scale = x.iter().copied().fold(0.0, f64::max);
    let y: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let ln_y: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mean_ln = ln_y.iter().sum::<f64>() / y.len() as f64;
    // g(B) = Σ yᴮ ln y / Σ yᴮ − 1/B − mean ln y, increasing in B
    let g = |b: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (&v, &l) in y.iter().zip(&ln_y) {
            let p = v.powf(b);
            s0 += p;
            s1 += p * l;
            s2 += p * l * l;
        }
        let val = s1 / s0 - 1.0 / b - mean_ln;
        let der = s2 / s0 - (s1 / s0).powi(2) + 1.0 / (b * b);
        (val, der, s0)
    };
    let init = initial_from_prepared(x, Family::Weibull)?;
    let Distribution::Weibull { b: mut shape, .. } = init else {
        unreachable!()
    };
    let (mut lo, mut hi) = (1e-3, 1e3);
    for _ in 0..NEWTON_MAX_ITER {
        let (val, der, _) = g(shape);
        if val > 0.0 {
            hi = shape;
        } else {
            lo = shape;
        }
        let mut next = shape - val / der;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - shape).abs() <= 1e-13 * shape {
            let (_, _, s0) = g(next);
            let a = scale * (s0 / y.len() as f64).powf(1.0 / next);
            return Ok(Distribution::Weibull { a, b: next });
        }
        shape = next;
    }
    Err(Error::Convergence {
        family: Family::Weibull,
        iterations: NEWTON_MAX_ITER,
    })
}

fn fit_beta(x: &[f64]) -> Result<Distribution> {
    let (lo, hi) = beta_support(x)?;
    let n = x.len() as f64;
    let u: Vec<f64> = x.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let g1 = u.iter().map(|v| v.ln()).sum::<f64>() / n;
    let g2 = u.iter().map(|v| (1.0 - v).ln()).sum::<f64>() / n;
    let Distribution::Beta { mut a, mut b, .. } = initial_from_prepared(x, Family::Beta)? else {
        unreachable!()
    };
    for _ in 0..NEWTON_MAX_ITER {
        // score equations ψ(a) − ψ(a+b) = g1, ψ(b) − ψ(a+b) = g2
        let dab = digamma(a + b);
        let f1 = digamma(a) - dab - g1;
        let f2 = digamma(b) - dab - g2;
        let tab = trigamma(a + b);
        let (j11, j12, j22) = (trigamma(a) - tab, -tab, trigamma(b) - tab);
        let det = j11 * j22 - j12 * j12;
        let da = (j22 * f1 - j12 * f2) / det;
        let db = (j11 * f2 - j12 * f1) / det;
        let mut t = 1.0;
        while a - t * da <= 0.0 || b - t * db <= 0.0 {
            t *= 0.5;
        }
        let (na, nb) = (a - t * da, b - t * db);
        let done = (na - a).abs() <= 1e-13 * a && (nb - b).abs() <= 1e-13 * b;
        a = na;
        b = nb;
        if done {
            return Ok(Distribution::Beta { a, b, lo, hi });
        }
    }
    Err(Error::Convergence {
        family: Family::Beta,
        iterations: NEWTON_MAX_ITER,
    })
}

/// Gumbel-min MLE. σ solves σ + mean(x) − Σ xᵢ wᵢ / Σ wᵢ = 0 with
/// wᵢ = exp(xᵢ/σ); μ then follows in closed form.
fn fit_gumbel_min(x: &[f64], m: f64, s: f64) -> Result<Distribution> {
    let z: Vec<f64> = x.iter().map(|v| (v - m) / s).collect();
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weighted = |sigma: f64| {
        let (mut sw, mut swz) = (0.0, 0.0);
        for &v in &z {
            let w = ((v - zmax) / sigma).exp();
            sw += w;
            swz += w * v;
        }
        (swz / sw, sw)
    };
    // The standardized data have zero mean.
    let h = |sigma: f64| sigma - weighted(sigma).0;
    let (mut lo, mut hi) = (1e-6, 1.0);
    while h(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Convergence {
                family: Family::ExtremeValue,
                iterations: 0,
            });
        }
    }
    let mut iterations = 0;
    while hi - lo > 1e-15 * hi {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if iterations > 2000 {
            break;
        }
    }
    let sigma_z = 0.5 * (lo + hi);
    let (_, sw) = weighted(sigma_z);
    let mu_z = zmax + sigma_z * (sw / z.len() as f64).ln();
    Ok(Distribution::ExtremeValue {
        mu: m + s * mu_z,
        sigma: s * sigma_z,
    })
}

/// GEV and Student t: simplex search on standardized data, then a Newton
/// polish.
fn fit_simplex(x: &[f64], family: Family, m: f64, s: f64) -> Result<Distribution> {
    let z: Vec<f64> = x.iter().map(|v| (v - m) / s).collect();
    let init = initial_from_prepared(x, family)?;
    // Unconstrained coordinates on the standardized scale.
    let (theta0, steps): (Vec<f64>, Vec<f64>) = match init {
        Distribution::Gev { k, sigma, mu } => (
            vec![k, (sigma / s).ln(), (mu - m) / s],
            vec![0.05, 0.1, 0.1],
        ),
        Distribution::StudentT { mu, sigma, nu } => (
            vec![(mu - m) / s, (sigma / s).ln(), nu.ln()],
            vec![0.1, 0.1, 0.3],
        ),
        _ => unreachable!(),
    };
    let to_dist = |t: &[f64]| match family {
        Family::Gev => Distribution::Gev {
            k: t[0],
            sigma: t[1].exp(),
            mu: t[2],
        },
        _ => Distribution::StudentT {
            mu: t[0],
            sigma: t[1].exp(),
            nu: t[2].exp(),
        },
    };
    let objective = |t: &[f64]| {
        if family == Family::StudentT && t[2] > 1e6f64.ln() {
            return f64::INFINITY;
        }
        // Below k = -1 the GEV likelihood is unbounded at the upper end point.
        if family == Family::Gev && t[0] < -1.0 {
            return f64::INFINITY;
        }
        let d = to_dist(t);
        -d.log_likelihood(&z)
    };
    // Moment-type GEV starts can leave samples outside the support; pull
    // the shape toward 0, whose support is the whole line.
    let mut theta0 = theta0;
    if family == Family::Gev {
        for _ in 0..30 {
            if objective(&theta0).is_finite() {
                break;
            }
            theta0[0] *= 0.5;
        }
        if !objective(&theta0).is_finite() {
            theta0[0] = 0.0;
        }
    }
    let opts = NelderMeadOptions::default();
    let min = nelder_mead(objective, &theta0, &steps, opts);
    if !min.converged || !min.value.is_finite() {
        return Err(Error::Convergence {
            family,
            iterations: min.iterations,
        });
    }
    let min = newton_polish(objective, min, 50);
    Ok(match to_dist(&min.x) {
        Distribution::Gev { k, sigma, mu } => Distribution::Gev {
            k,
            sigma: sigma * s,
            mu: m + mu * s,
        },
        Distribution::StudentT { mu, sigma, nu } => Distribution::StudentT {
            mu: m + mu * s,
            sigma: sigma * s,
            nu,
        },
        _ => unreachable!(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub fit: FittedDistribution,
    pub ks: KsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFamily {
    pub family: Family,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestFit {
    /// Ranked by descending p-value.
    pub rows: Vec<FitRow>,
    pub skipped: Vec<SkippedFamily>,
}

impl BestFit {
    pub fn best(&self) -> &FitRow {
        &self.rows[0]
    }
}

/// Fit and test every family, ranking the successful fits by p-value.
pub fn best_fit(samples: &[f64], families: &[Family], significance: f64) -> Result<BestFit> {
    if families.is_empty() {
        return Err(Error::Parameter(
            "no distribution families requested".into(),
        ));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::Parameter(format!(
            "significance must lie in (0, 1), got {significance}"
        )));
    }
    let outcomes: Vec<(Family, Result<FitRow>)> = families
        .par_iter()
        .map(|&family| {
            let row = fit_mle(samples, family).map(|fit| {
                let ks = ks_test_at(samples, &fit.dist, significance);
                FitRow { fit, ks }
            });
            (family, row)
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (family, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => skipped.push(SkippedFamily {
                family,
                reason: e.to_string(),
            }),
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyResult);
    }
    rows.sort_by(|a, b| {
        b.ks.p_value
            .total_cmp(&a.ks.p_value)
            .then(a.ks.statistic.total_cmp(&b.ks.statistic))
            .then(a.fit.family().cmp(&b.fit.family()))
    });
    Ok(BestFit { rows, skipped })
}
