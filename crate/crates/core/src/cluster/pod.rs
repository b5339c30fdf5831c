use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::havok::rows;

/// POD-compressed feature coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compression {
    /// Retained mode count r_f.
    pub rank: usize,
    /// n × r_f coordinates, one row per input vector.
    #[serde(with = "rows")]
    pub z: DMatrix<f64>,
    /// 10 × r_f orthonormal basis.
    #[serde(with = "rows")]
    pub basis: DMatrix<f64>,
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Cumulative variance ratio after 1..=10 modes.
    pub cumulative_energy: Vec<f64>,
    pub column_mean: Vec<f64>,
    pub column_std: Vec<f64>,
}

impl Compression {
    /// Variance fraction captured by the retained modes.
    pub fn energy(&self) -> f64 {
        self.cumulative_energy[self.rank - 1]
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.z.row(i).iter().copied().collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.z.nrows()).map(|i| self.point(i)).collect()
    }
}

/// Column-standardized feature matrix (n × 10). Constant columns become
/// zero; a column counts as constant when its spread is below 1e-9 of
/// max(1, largest magnitude), which absorbs round-off in features that are
/// analytically zero (the mean of a whole number of sine periods).
pub fn standardize_columns(features: &[FeatureVector]) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let n = features.len();
    let mut m = DMatrix::from_fn(n, FEATURE_COUNT, |i, j| features[i].f[j]);
    let mut means = Vec::with_capacity(FEATURE_COUNT);
    let mut stds = Vec::with_capacity(FEATURE_COUNT);
    for j in 0..FEATURE_COUNT {
        let col: Vec<f64> = m.column(j).iter().copied().collect();
        let (mu, sd) = crate::signal::mean_std(&col);
        let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sd = if sd > 1e-9 * scale.max(1.0) { sd } else { 0.0 };
        for i in 0..n {
            m[(i, j)] = if sd > 0.0 { (m[(i, j)] - mu) / sd } else { 0.0 };
        }
        means.push(mu);
        stds.push(sd);
    }
    (m, means, stds)
}

/// Smallest mode count whose cumulative eigenvalue ratio reaches `target`.
/// At `target = 1` this is the numerical rank of the spectrum.
pub fn energy_rank(eigenvalues: &[f64], target: f64) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    if target >= 1.0 {
        let tol = eigenvalues[0] * eigenvalues.len() as f64 * f64::EPSILON;
        return eigenvalues.iter().filter(|&&l| l > tol).count().max(1);
    }
    let mut acc = 0.0;
    for (i, l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc / total >= target - 1e-12 {
            return i + 1;
        }
    }
    eigenvalues.len()
}

/// Eigen-decompose the covariance of the standardized features and keep
/// the smallest number of modes whose cumulative variance ratio reaches
/// `energy_target`.
pub fn compress(features: &[FeatureVector], energy_target: f64) -> Result<Compression> {
    if !(energy_target > 0.0 && energy_target <= 1.0) {
        return Err(Error::Parameter(format!(
            "energy target must lie in (0, 1], got {energy_target}"
        )));
    }
    let n = features.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "compression needs at least 2 feature vectors, got {n}"
        )));
    }
    let (z, column_mean, column_std) = standardize_columns(features);
    let cov = z.transpose() * &z / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..FEATURE_COUNT).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateSignal(
            "all features are constant across sequences".into(),
        ));
    }
    let mut acc = 0.0;
    let cumulative_energy: Vec<f64> = eigenvalues
        .iter()
        .map(|l| {
            acc += l;
            (acc / total).min(1.0)
        })
        .collect();
    let rank = energy_rank(&eigenvalues, energy_target);
    let mut basis = DMatrix::zeros(FEATURE_COUNT, rank);
    for (k, &i) in order.iter().take(rank).enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // deterministic sign: largest-magnitude entry positive
        let big = col
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if big < 0.0 {
            col.neg_mut();
        }
        basis.set_column(k, &col);
    }
    Ok(Compression {
        rank,
        z: &z * &basis,
        basis,
        eigenvalues,
        cumulative_energy,
        column_mean,
        column_std,
    })
}
