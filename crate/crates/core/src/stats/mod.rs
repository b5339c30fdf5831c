//! Maximum-likelihood fitting of nine distribution families and
//! Kolmogorov–Smirnov goodness-of-fit ranking.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{
    Beta, Continuous, ContinuousCDF, Exp, Gamma, LogNormal, Normal, StudentsT, Weibull,
};

mod fit;
mod ks;
pub mod optimize;
pub mod special;

pub use fit::{
    best_fit, fit_mle, initial_estimate, BestFit, FitRow, FittedDistribution, SkippedFamily,
};
pub use ks::{
    kolmogorov_survival, ks_pvalue, ks_statistic, ks_test, ks_test_at, Decision, KsReport,
    DEFAULT_SIGNIFICANCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "&'static str", try_from = "String")]
pub enum Family {
    Normal,
    Beta,
    Exponential,
    /// Type-I extreme value for minima (Gumbel-min).
    ExtremeValue,
    Gamma,
    Gev,
    Lognormal,
    /// Location-scale Student t.
    StudentT,
    Weibull,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Normal,
        Family::Beta,
        Family::Exponential,
        Family::ExtremeValue,
        Family::Gamma,
        Family::Gev,
        Family::Lognormal,
        Family::StudentT,
        Family::Weibull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "Normal",
            Family::Beta => "Beta",
            Family::Exponential => "Exponential",
            Family::ExtremeValue => "EV",
            Family::Gamma => "Gamma",
            Family::Gev => "GEV",
            Family::Lognormal => "Lognormal",
            Family::StudentT => "StudentT",
            Family::Weibull => "Weibull",
        }
    }

    /// Families defined only for positive samples.
    pub fn needs_positive(self) -> bool {
        matches!(
            self,
            Family::Exponential | Family::Gamma | Family::Weibull | Family::Lognormal
        )
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Family> for &'static str {
    fn from(f: Family) -> Self {
        f.name()
    }
}

impl TryFrom<String> for Family {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "normal" | "gaussian" => Family::Normal,
            "beta" => Family::Beta,
            "exponential" | "exp" => Family::Exponential,
            "ev" | "extremevalue" | "gumbel" | "gumbelmin" => Family::ExtremeValue,
            "gamma" => Family::Gamma,
            "gev" | "generalizedextremevalue" => Family::Gev,
            "lognormal" => Family::Lognormal,
            "studentt" | "t" | "tlocationscale" => Family::StudentT,
            "weibull" => Family::Weibull,
            _ => return Err(format!("unknown distribution family `{s}`")),
        })
    }
}

/// A fully parameterized member of one of the supported families.
///
/// Parameter names follow the common tabulation convention: Gamma `a`
/// shape and `b` scale, Weibull `A` scale and `B` shape, GEV shape `k` with
/// `k > 0` the heavy (Fréchet) tail, Exponential `mu` the mean. Beta
/// carries the affine map `u = (x − lo)/(hi − lo)` used to bring the data
/// into the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Distribution {
    Normal { mu: f64, sigma: f64 },
    Beta { a: f64, b: f64, lo: f64, hi: f64 },
    Exponential { mu: f64 },
    ExtremeValue { mu: f64, sigma: f64 },
    Gamma { a: f64, b: f64 },
    Gev { k: f64, sigma: f64, mu: f64 },
    Lognormal { mu: f64, sigma: f64 },
    StudentT { mu: f64, sigma: f64, nu: f64 },
    Weibull { a: f64, b: f64 },
}

impl Distribution {
    pub fn family(&self) -> Family {
        match self {
            Distribution::Normal { .. } => Family::Normal,
            Distribution::Beta { .. } => Family::Beta,
            Distribution::Exponential { .. } => Family::Exponential,
            Distribution::ExtremeValue { .. } => Family::ExtremeValue,
            Distribution::Gamma { .. } => Family::Gamma,
            Distribution::Gev { .. } => Family::Gev,
            Distribution::Lognormal { .. } => Family::Lognormal,
            Distribution::StudentT { .. } => Family::StudentT,
            Distribution::Weibull { .. } => Family::Weibull,
        }
    }

    /// Named parameters in tabulation order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Distribution::Normal { mu, sigma } => vec![("mu", mu), ("sigma", sigma)],
            Distribution::Beta { a, b, lo, hi } => vec![("a", a), ("b", b), ("lo", lo), ("hi", hi)],
            Distribution::Exponential { mu } => vec![("mu", mu)],
            Distribution::ExtremeValue { mu, sigma } => vec![("mu", mu), ("sigma", sigma)],
            Distribution::Gamma { a, b } => vec![("a", a), ("b", b)],
            Distribution::Gev { k, sigma, mu } => vec![("k", k), ("sigma", sigma), ("mu", mu)],
            Distribution::Lognormal { mu, sigma } => vec![("mu", mu), ("sigma", sigma)],
            Distribution::StudentT { mu, sigma, nu } => {
                vec![("mu", mu), ("sigma", sigma), ("v", nu)]
            }
            Distribution::Weibull { a, b } => vec![("A", a), ("B", b)],
        }
    }

    /// Whether every parameter lies inside its domain.
    pub fn is_valid(&self) -> bool {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let fin = |v: f64| v.is_finite();
        match *self {
            Distribution::Normal { mu, sigma }
            | Distribution::ExtremeValue { mu, sigma }
            | Distribution::Lognormal { mu, sigma } => fin(mu) && pos(sigma),
            Distribution::Beta { a, b, lo, hi } => {
                pos(a) && pos(b) && fin(lo) && fin(hi) && hi > lo
            }
            Distribution::Exponential { mu } => pos(mu),
            Distribution::Gamma { a, b } | Distribution::Weibull { a, b } => pos(a) && pos(b),
            Distribution::Gev { k, sigma, mu } => fin(k) && pos(sigma) && fin(mu),
            Distribution::StudentT { mu, sigma, nu } => fin(mu) && pos(sigma) && pos(nu),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !self.is_valid() {
            return f64::NAN;
        }
        match *self {
            Distribution::Normal { mu, sigma } => {
                Normal::new(mu, sigma).map_or(f64::NAN, |d| d.ln_pdf(x))
            }
            Distribution::Beta { a, b, lo, hi } => {
                let u = (x - lo) / (hi - lo);
                if !(0.0..=1.0).contains(&u) {
                    return f64::NEG_INFINITY;
                }
                Beta::new(a, b).map_or(f64::NAN, |d| d.ln_pdf(u)) - (hi - lo).ln()
            }
            Distribution::Exponential { mu } => {
                Exp::new(1.0 / mu).map_or(f64::NAN, |d| d.ln_pdf(x))
            }
            Distribution::ExtremeValue { mu, sigma } => {
                let z = (x - mu) / sigma;
                -sigma.ln() + z - z.exp()
            }
            Distribution::Gamma { a, b } => {
                Gamma::new(a, 1.0 / b).map_or(f64::NAN, |d| d.ln_pdf(x))
            }
            Distribution::Gev { k, sigma, mu } => gev_ln_pdf(k, sigma, mu, x),
            Distribution::Lognormal { mu, sigma } => {
                LogNormal::new(mu, sigma).map_or(f64::NAN, |d| d.ln_pdf(x))
            }
            Distribution::StudentT { mu, sigma, nu } => {
                StudentsT::new(mu, sigma, nu).map_or(f64::NAN, |d| d.ln_pdf(x))
            }
            Distribution::Weibull { a, b } => Weibull::new(b, a).map_or(f64::NAN, |d| d.ln_pdf(x)),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !self.is_valid() {
            return f64::NAN;
        }
        match *self {
            Distribution::Normal { mu, sigma } => {
                Normal::new(mu, sigma).map_or(f64::NAN, |d| d.cdf(x))
            }
            Distribution::Beta { a, b, lo, hi } => {
                let u = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                Beta::new(a, b).map_or(f64::NAN, |d| d.cdf(u))
            }
            Distribution::Exponential { mu } => Exp::new(1.0 / mu).map_or(f64::NAN, |d| d.cdf(x)),
            Distribution::ExtremeValue { mu, sigma } => {
                let z = (x - mu) / sigma;
                -(-z.exp()).exp_m1()
            }
            Distribution::Gamma { a, b } => Gamma::new(a, 1.0 / b).map_or(f64::NAN, |d| d.cdf(x)),
            Distribution::Gev { k, sigma, mu } => gev_cdf(k, sigma, mu, x),
            Distribution::Lognormal { mu, sigma } => {
                LogNormal::new(mu, sigma).map_or(f64::NAN, |d| d.cdf(x))
            }
            Distribution::StudentT { mu, sigma, nu } => {
                StudentsT::new(mu, sigma, nu).map_or(f64::NAN, |d| d.cdf(x))
            }
            Distribution::Weibull { a, b } => Weibull::new(b, a).map_or(f64::NAN, |d| d.cdf(x)),
        }
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| self.ln_pdf(x)).sum()
    }
}

const GEV_GUMBEL_LIMIT: f64 = 1e-12;

fn gev_ln_pdf(k: f64, sigma: f64, mu: f64, x: f64) -> f64 {
    let z = (x - mu) / sigma;
    if k.abs() < GEV_GUMBEL_LIMIT {
        return -sigma.ln() - z - (-z).exp();
    }
    let t = 1.0 + k * z;
    if t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -sigma.ln() - (1.0 + 1.0 / k) * t.ln() - t.powf(-1.0 / k)
}

fn gev_cdf(k: f64, sigma: f64, mu: f64, x: f64) -> f64 {
    let z = (x - mu) / sigma;
    if k.abs() < GEV_GUMBEL_LIMIT {
        return (-(-z).exp()).exp();
    }
    let t = 1.0 + k * z;
    if t <= 0.0 {
        return if k > 0.0 { 0.0 } else { 1.0 };
    }
    (-t.powf(-1.0 / k)).exp()
}

/// Add |min v| to every element, making a series with a non-positive
/// minimum start exactly at zero. A strictly positive series is shifted
/// up by its minimum as well.
pub fn shift_positive(v: &[f64]) -> Vec<f64> {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = min.abs();
    v.iter().map(|x| x + shift).collect()
}
