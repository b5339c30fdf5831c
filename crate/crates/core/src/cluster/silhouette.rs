use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_pp, ClusterResult};
use crate::error::{Error, Result};

/// Mean silhouette mapped from [−1, 1] to [0, 1].
///
/// A point alone in its cluster has a = 0 and therefore s = 1 whenever the
/// nearest other cluster is at positive distance. A point with a = b = 0
/// (all points coincide) contributes s = 0.
pub fn silhouette(points: &[Vec<f64>], result: &ClusterResult) -> Result<f64> {
    let k = result.k();
    if k < 2 {
        return Err(Error::Parameter(
            "silhouette needs at least 2 clusters".into(),
        ));
    }
    if result.labels.len() != points.len() {
        return Err(Error::Bounds("labels and points differ in length".into()));
    }
    let sizes = result.sizes();
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::Parameter(
            "silhouette is undefined with an empty cluster".into(),
        ));
    }
    let labels = &result.labels;
    let raw: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; k];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[labels[j]] += super::kmeans::sq_dist(&points[i], p).sqrt();
                }
            }
            let own = labels[i];
            let a = if sizes[own] > 1 {
                sums[own] / (sizes[own] - 1) as f64
            } else {
                0.0
            };
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok((mean + 1.0) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSelection {
    pub k: usize,
    /// (K, normalized silhouette) for every K tried.
    pub scores: Vec<(usize, f64)>,
}

/// Run k-means for every K in `k_min..=k_max` (seed + K) and keep the
/// best normalized silhouette, ties to the smaller K.
pub fn select_cluster_count(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    max_iter: usize,
    seed: u64,
) -> Result<CountSelection> {
    let n = points.len();
    if k_min < 2 || k_max < k_min || k_max + 1 > n {
        return Err(Error::Parameter(format!(
            "cluster range {k_min}..={k_max} must lie within 2..={}",
            n.saturating_sub(1)
        )));
    }
    let scores = (k_min..=k_max)
        .into_par_iter()
        .map(|k| {
            let r = kmeans_pp(points, k, max_iter, seed.wrapping_add(k as u64))?;
            Ok((k, silhouette(points, &r)?))
        })
        .collect::<Result<Vec<(usize, f64)>>>()?;
    let mut best = scores[0];
    for &(k, s) in &scores[1..] {
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok(CountSelection { k: best.0, scores })
}
