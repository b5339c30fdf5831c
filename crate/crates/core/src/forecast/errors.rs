use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    /// Time index (multiples of Δt).
    pub instant: usize,
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Per-instant error statistics over an ensemble of forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEvolution {
    pub rmse: Vec<f64>,
    pub mae: Vec<f64>,
    /// Variance (population) of |e| across members.
    pub vae: Vec<f64>,
    pub histograms: Vec<ErrorHistogram>,
}

/// RMSE, MAE and VAE of e_i(t) = x̂_i(t) − x_i(t) across members i at
/// every instant t, plus error histograms at the requested instants
/// (instants beyond the horizon are ignored).
pub fn error_evolution(
    predictions: &[Vec<f64>],
    truths: &[Vec<f64>],
    histogram_instants: &[usize],
    bins: usize,
) -> Result<ErrorEvolution> {
    if predictions.is_empty() {
        return Err(Error::Parameter(
            "error evolution needs at least one member".into(),
        ));
    }
    if predictions.len() != truths.len() {
        return Err(Error::Bounds(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let len = predictions[0].len();
    if predictions.iter().chain(truths).any(|s| s.len() != len) {
        return Err(Error::Bounds("ensemble members differ in length".into()));
    }
    let members = predictions.len() as f64;
    let errors_at = |t: usize| -> Vec<f64> {
        predictions
            .iter()
            .zip(truths)
            .map(|(p, x)| p[t] - x[t])
            .collect()
    };
    let mut rmse = Vec::with_capacity(len);
    let mut mae = Vec::with_capacity(len);
    let mut vae = Vec::with_capacity(len);
    for t in 0..len {
        let e = errors_at(t);
        let ms = e.iter().map(|v| v * v).sum::<f64>() / members;
        let ma = e.iter().map(|v| v.abs()).sum::<f64>() / members;
        let va = e.iter().map(|v| (v.abs() - ma).powi(2)).sum::<f64>() / members;
        rmse.push(ms.sqrt());
        mae.push(ma);
        vae.push(va);
    }
    let bins = bins.max(1);
    let histograms = histogram_instants
        .iter()
        .filter(|&&t| t < len)
        .map(|&t| {
            let e = errors_at(t);
            let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (lo, hi) = if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            };
            let width = (hi - lo) / bins as f64;
            let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
            let mut counts = vec![0u64; bins];
            for v in e {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
            ErrorHistogram {
                instant: t,
                edges,
                counts,
            }
        })
        .collect();
    Ok(ErrorEvolution {
        rmse,
        mae,
        vae,
        histograms,
    })
}
