//! Delay embedding: Hankel matrices, average mutual information for the
//! delay and false nearest neighbours for the dimension.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::mean_std;

pub const DEFAULT_BINS: usize = 16;
pub const DEFAULT_R_TOL: f64 = 10.0;
pub const DEFAULT_A_TOL: f64 = 2.0;
pub const DEFAULT_DROP_THRESHOLD: f64 = 0.1;

/// Delay step τ (in samples) and embedding dimension d.
///
/// `dim = 1` is accepted so that the trivial embedding (the series itself)
/// and the FNN baseline can be expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub tau: usize,
    pub dim: usize,
}

impl EmbeddingConfig {
    pub fn new(tau: usize, dim: usize) -> Result<Self> {
        if tau == 0 || dim == 0 {
            return Err(Error::Parameter(format!(
                "embedding needs tau >= 1 and dim >= 1, got tau = {tau}, dim = {dim}"
            )));
        }
        Ok(Self { tau, dim })
    }

    /// Samples spanned by one delay vector, minus one.
    pub fn window(&self) -> usize {
        (self.dim - 1) * self.tau
    }

    pub fn columns_for(&self, len: usize) -> Option<usize> {
        len.checked_sub(self.window()).filter(|&n| n > 0)
    }
}

/// d × n_t matrix whose column t is [x_t, x_{t+τ}, …, x_{t+(d−1)τ}].
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    pub data: DMatrix<f64>,
    pub config: EmbeddingConfig,
}

impl HankelMatrix {
    pub fn n_t(&self) -> usize {
        self.data.ncols()
    }
}

pub fn embed(x: &[f64], config: EmbeddingConfig) -> Result<HankelMatrix> {
    let n_t = config.columns_for(x.len()).ok_or_else(|| {
        Error::Bounds(format!(
            "(d - 1) * tau = {} does not fit a series of length {}",
            config.window(),
            x.len()
        ))
    })?;
    let data = DMatrix::from_fn(config.dim, n_t, |i, j| x[j + i * config.tau]);
    Ok(HankelMatrix { data, config })
}

fn bin_indices(x: &[f64], bins: usize) -> Vec<usize> {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let width = hi - lo;
    x.iter()
        .map(|&v| {
            if width > 0.0 {
                (((v - lo) / width * bins as f64) as usize).min(bins - 1)
            } else {
                0
            }
        })
        .collect()
}

/// Plug-in mutual information (nats) between two equally long series from
/// `bins × bins` equal-width histograms over each series' own range.
pub fn histogram_mi(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let ia = bin_indices(a, bins);
    let ib = bin_indices(b, bins);
    let mut joint = vec![0u64; bins * bins];
    let mut pa = vec![0u64; bins];
    let mut pb = vec![0u64; bins];
    for (&i, &j) in ia.iter().zip(&ib) {
        joint[i * bins + j] += 1;
        pa[i] += 1;
        pb[j] += 1;
    }
    let n = a.len() as f64;
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij * n * n / (pa[i] as f64 * pb[j] as f64)).ln();
            }
        }
    }
    mi
}

/// Average mutual information between x_t and x_{t+τ}.
pub fn ami(x: &[f64], tau: usize, bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::Parameter("AMI needs at least one bin".into()));
    }
    let pairs = x.len().saturating_sub(tau);
    if pairs < 2 * bins {
        return Err(Error::InsufficientData(format!(
            "AMI at tau = {tau} with {bins} bins needs at least {} pairs, have {pairs}",
            2 * bins
        )));
    }
    Ok(histogram_mi(&x[..pairs], &x[tau..], bins))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySelection {
    pub tau: usize,
    /// AMI at τ = 1..=tau_max (index 0 holds τ = 1).
    pub curve: Vec<f64>,
    /// Set when the curve has no interior strict local minimum and `tau` is
    /// the global argmin instead.
    pub no_local_minimum: bool,
}

/// First strict local minimum of the AMI curve over τ = 1..=tau_max.
pub fn select_delay(x: &[f64], tau_max: usize, bins: usize) -> Result<DelaySelection> {
    Ok(delay_from_curve(ami_curve(x, tau_max, bins)?))
}

/// AMI at τ = 1..=tau_max.
pub fn ami_curve(x: &[f64], tau_max: usize, bins: usize) -> Result<Vec<f64>> {
    if tau_max < 2 {
        return Err(Error::Parameter(format!(
            "tau_max must be at least 2, got {tau_max}"
        )));
    }
    (1..=tau_max)
        .into_par_iter()
        .map(|tau| ami(x, tau, bins))
        .collect()
}

/// Delay choice from an AMI curve (index 0 holds τ = 1), e.g. one averaged
/// over several sequences.
pub fn delay_from_curve(curve: Vec<f64>) -> DelaySelection {
    let first_min = (1..curve.len().saturating_sub(1))
        .find(|&i| curve[i] < curve[i - 1] && curve[i] < curve[i + 1]);
    match first_min {
        Some(i) => DelaySelection {
            tau: i + 1,
            curve,
            no_local_minimum: false,
        },
        None => {
            let i = (0..curve.len())
                .min_by(|&a, &b| curve[a].total_cmp(&curve[b]).then(a.cmp(&b)))
                .unwrap_or(0);
            DelaySelection {
                tau: i + 1,
                curve,
                no_local_minimum: true,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FnnOptions {
    /// Relative distance growth that marks a neighbour false.
    pub r_tol: f64,
    /// Absolute size, in units of the signal standard deviation, beyond
    /// which the expanded distance marks a neighbour false.
    pub a_tol: f64,
}

impl Default for FnnOptions {
    fn default() -> Self {
        Self {
            r_tol: DEFAULT_R_TOL,
            a_tol: DEFAULT_A_TOL,
        }
    }
}

/// Percentage of false nearest neighbours when going from dimension `d` to
/// `d + 1` (distance-ratio and attractor-size criteria). Neighbours are
/// exact Euclidean nearest neighbours; ties go to the smaller index.
pub fn fnn_percentage(x: &[f64], tau: usize, d: usize, opts: FnnOptions) -> Result<f64> {
    if tau == 0 || d == 0 {
        return Err(Error::Parameter("FNN needs tau >= 1 and d >= 1".into()));
    }
    let n = x.len().saturating_sub(d * tau);
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "FNN at d = {d}, tau = {tau} needs more than {} samples, have {}",
            d * tau + 1,
            x.len()
        )));
    }
    let (_, sigma) = mean_std(x);
    let coord = |i: usize, k: usize| x[i + k * tau];

    // Order by the first coordinate; a candidate whose first coordinate is
    // farther than the current best distance cannot win.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let false_count: usize = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            let mut best_j = usize::MAX;
            let consider = |j: usize, best: &mut f64, best_j: &mut usize| {
                let mut dist = 0.0;
                for k in 0..d {
                    let diff = coord(i, k) - coord(j, k);
                    dist += diff * diff;
                    if dist > *best {
                        return;
                    }
                }
                if dist < *best || (dist == *best && j < *best_j) {
                    *best = dist;
                    *best_j = j;
                }
            };
            let r = rank[i];
            let mut lo = r;
            let mut hi = r + 1;
            loop {
                let down = (lo > 0).then(|| order[lo - 1]);
                let up = (hi < n).then(|| order[hi]);
                let gap_down = down.map(|j| (x[i] - x[j]).powi(2));
                let gap_up = up.map(|j| (x[i] - x[j]).powi(2));
                let down_ok = gap_down.is_some_and(|g| g <= best);
                let up_ok = gap_up.is_some_and(|g| g <= best);
                if !down_ok && !up_ok {
                    break;
                }
                if down_ok {
                    consider(down.unwrap(), &mut best, &mut best_j);
                    lo -= 1;
                }
                if up_ok {
                    consider(up.unwrap(), &mut best, &mut best_j);
                    hi += 1;
                }
            }
            let extra = (coord(i, d) - coord(best_j, d)).abs();
            let r_d = best.sqrt();
            let ratio_false = if r_d > 0.0 {
                extra / r_d > opts.r_tol
            } else {
                extra > 0.0
            };
            let size_false = (best + extra * extra).sqrt() / sigma > opts.a_tol;
            usize::from(ratio_false || size_false)
        })
        .sum();
    Ok(100.0 * false_count as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSelection {
    pub dim: usize,
    /// FNN percentage at d = 1..=d_max (index 0 holds d = 1).
    pub curve: Vec<f64>,
    /// Set when the curve never drops to the threshold and `dim = d_max`.
    pub no_drop: bool,
    /// First dimension after `dim` at which the curve rises again.
    pub rise_index: Option<usize>,
}

/// Smallest d ≥ 2 whose FNN percentage is at most `drop_threshold` times
/// the d = 1 value.
pub fn select_dimension(
    x: &[f64],
    tau: usize,
    d_max: usize,
    drop_threshold: f64,
    opts: FnnOptions,
) -> Result<DimensionSelection> {
    if !(0.0..=1.0).contains(&drop_threshold) {
        return Err(Error::Parameter(format!(
            "drop threshold must lie in [0, 1], got {drop_threshold}"
        )));
    }
    dimension_from_curve(fnn_curve(x, tau, d_max, opts)?, drop_threshold)
}

/// FNN percentage at d = 1..=d_max.
pub fn fnn_curve(x: &[f64], tau: usize, d_max: usize, opts: FnnOptions) -> Result<Vec<f64>> {
    if d_max < 2 {
        return Err(Error::Parameter(format!(
            "d_max must be at least 2, got {d_max}"
        )));
    }
    (1..=d_max)
        .map(|d| fnn_percentage(x, tau, d, opts))
        .collect()
}

/// Dimension choice from an FNN curve (index 0 holds d = 1), e.g. one
/// averaged over several sequences.
pub fn dimension_from_curve(curve: Vec<f64>, drop_threshold: f64) -> Result<DimensionSelection> {
    if curve.len() < 2 {
        return Err(Error::Parameter(format!(
            "FNN curve needs d_max >= 2, got {}",
            curve.len()
        )));
    }
    let limit = drop_threshold * curve[0];
    let hit = (1..curve.len()).find(|&i| curve[i] <= limit);
    let (dim, no_drop) = match hit {
        Some(i) => (i + 1, false),
        None => (curve.len(), true),
    };
    let rise_index = (dim..curve.len())
        .find(|&i| curve[i] > curve[i - 1])
        .map(|i| i + 1);
    Ok(DimensionSelection {
        dim,
        curve,
        no_drop,
        rise_index,
    })
}
