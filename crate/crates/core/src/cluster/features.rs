use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{mean_std, Sequence};

pub const FEATURE_COUNT: usize = 10;

/// Feature order, frozen.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "mean",
    "std",
    "skewness",
    "excess_kurtosis",
    "lag1_autocorrelation",
    "dominant_frequency",
    "spectral_entropy",
    "zero_crossing_rate",
    "peak_to_peak",
    "rms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub f: [f64; FEATURE_COUNT],
}

/// The ten summary features of a raw (non-standardized) sequence.
///
/// * moments use the population convention;
/// * the dominant frequency (Hz) is the periodogram argmax excluding DC;
/// * spectral entropy is the Shannon entropy of the normalized periodogram
///   (DC excluded) divided by its maximum, so it lies in [0, 1];
/// * the zero-crossing rate counts sign changes of `x − mean` per second.
pub fn extract_features(s: &Sequence) -> Result<FeatureVector> {
    let x = s.values();
    let n = x.len();
    let nf = n as f64;
    let (mean, std) = mean_std(x);
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if std == 0.0 || std <= 1e-14 * scale {
        return Err(Error::DegenerateSignal(format!(
            "sequence `{}` has zero variance",
            s.id()
        )));
    }
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let m3 = c.iter().map(|v| v.powi(3)).sum::<f64>() / nf;
    let m4 = c.iter().map(|v| v.powi(4)).sum::<f64>() / nf;
    let var = std * std;
    let skew = m3 / (var * std);
    let kurt = m4 / (var * var) - 3.0;
    let lag1 = c.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (var * nf);

    let power = periodogram(&c);
    let (dominant, entropy) = if power.is_empty() {
        (0.0, 0.0)
    } else {
        let best = (0..power.len())
            .max_by(|&a, &b| power[a].total_cmp(&power[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        let total: f64 = power.iter().sum();
        let h: f64 = power
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| {
                let q = p / total;
                -q * q.ln()
            })
            .sum();
        let h_max = (power.len() as f64).ln();
        let entropy = if h_max > 0.0 { h / h_max } else { 0.0 };
        ((best + 1) as f64 / (nf * s.dt()), entropy)
    };

    let crossings = c
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count();
    let zcr = crossings as f64 / ((n - 1) as f64 * s.dt());
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / nf).sqrt();

    Ok(FeatureVector {
        id: s.id().to_string(),
        f: [
            mean,
            std,
            skew,
            kurt,
            lag1,
            dominant,
            entropy,
            zcr,
            hi - lo,
            rms,
        ],
    })
}

/// |X_k|² for k = 1..=n/2.
fn periodogram(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut buf: Vec<Complex<f64>> = c.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::<f64>::new()
        .plan_fft_forward(n)
        .process(&mut buf);
    buf[1..=n / 2].iter().map(|z| z.norm_sqr()).collect()
}
