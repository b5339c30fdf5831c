//! Hankel SVD, sparse ridge regression and the forced linear model
//! dv/dt = A v + B v_r in delay coordinates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{embed, EmbeddingConfig};
use crate::error::{Error, Result};

mod diff;
mod ridge;
mod svd;

pub use diff::differentiate;
pub use ridge::{ridge_solve, sequential_threshold_ridge, SparseFit};
pub use svd::{svd, truncation_rank, RankPolicy, SvdFactors};

pub const DEFAULT_LAMBDA: f64 = 1e-2;
pub const DEFAULT_EPS: f64 = 1e-6;

/// Row-major nested-list (de)serialization for matrices in JSON artifacts.
pub(crate) mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

pub(crate) mod vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Fitted forced linear model in the first `r` delay coordinates.
///
/// `v_1..v_{r−1}` evolve linearly (`a`) and are driven by `v_r` through
/// `b`; `v_r` itself has no equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HavokModel {
    pub r: usize,
    pub embedding: EmbeddingConfig,
    pub dt: f64,
    pub ridge_lambda: f64,
    pub threshold: f64,
    /// (r−1) × (r−1)
    #[serde(with = "rows")]
    pub a: DMatrix<f64>,
    /// r−1
    #[serde(with = "vector")]
    pub b: DVector<f64>,
    /// d × r
    #[serde(with = "rows")]
    pub u_r: DMatrix<f64>,
    #[serde(with = "vector")]
    pub s_r: DVector<f64>,
    /// Full singular spectrum of the training Hankel matrix.
    pub singular_values: Vec<f64>,
    /// Last training value of the forcing coordinate.
    pub last_forcing: f64,
}

impl HavokModel {
    pub fn linear_dim(&self) -> usize {
        self.r - 1
    }

    /// Eigenvalues of `a` as (re, im) pairs.
    pub fn eigenvalues(&self) -> Vec<(f64, f64)> {
        self.a
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|c| (c.re, c.im))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HavokFit {
    pub model: HavokModel,
    /// Training coordinates V_r, one row per Hankel column (n_t × r).
    pub coordinates: DMatrix<f64>,
    /// Frobenius norm of dV/dt − [V†|V_r]·[A|B]ᵀ over the regression rows.
    pub residual: f64,
    /// Active predictor set of each of the r−1 regressions.
    pub active: Vec<Vec<usize>>,
}

impl HavokFit {
    pub fn forcing(&self) -> Vec<f64> {
        self.coordinates
            .column(self.model.r - 1)
            .iter()
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub rank: RankPolicy,
    pub lambda: f64,
    pub eps: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            rank: RankPolicy::Manual(15),
            lambda: DEFAULT_LAMBDA,
            eps: DEFAULT_EPS,
        }
    }
}

/// Embed, decompose, truncate, differentiate and regress.
pub fn fit_havok(
    x: &[f64],
    dt: f64,
    embedding: EmbeddingConfig,
    opts: FitOptions,
) -> Result<HavokFit> {
    if let RankPolicy::Manual(r) = opts.rank {
        if r < 2 {
            return Err(Error::Parameter(format!(
                "rank must be at least 2 for a forced model, got {r}"
            )));
        }
    }
    let hankel = embed(x, embedding)?;
    let factors = svd(&hankel.data)?;
    let r = truncation_rank(factors.s.as_slice(), opts.rank, hankel.data.shape())?;
    let v_r = factors.v.columns(0, r).into_owned();
    let dv = differentiate(&v_r.columns(0, r - 1).into_owned(), dt)?;
    let g = v_r.rows(2, v_r.nrows() - 4).into_owned();

    let fits = (0..r - 1)
        .into_par_iter()
        .map(|j| sequential_threshold_ridge(&g, &dv.column(j).into_owned(), opts.lambda, opts.eps))
        .collect::<Result<Vec<SparseFit>>>()?;

    let mut a = DMatrix::zeros(r - 1, r - 1);
    let mut b = DVector::zeros(r - 1);
    for (j, fit) in fits.iter().enumerate() {
        for k in 0..r - 1 {
            a[(j, k)] = fit.coefficients[k];
        }
        b[j] = fit.coefficients[r - 1];
    }
    let mut coef = DMatrix::zeros(r, r - 1);
    for (j, fit) in fits.iter().enumerate() {
        coef.set_column(j, &fit.coefficients);
    }
    let residual = (&dv - &g * coef).norm();

    let model = HavokModel {
        r,
        embedding,
        dt,
        ridge_lambda: opts.lambda,
        threshold: opts.eps,
        a,
        b,
        u_r: factors.u.columns(0, r).into_owned(),
        s_r: factors.s.rows(0, r).into_owned(),
        singular_values: factors.s.iter().copied().collect(),
        last_forcing: v_r[(v_r.nrows() - 1, r - 1)],
    };
    Ok(HavokFit {
        model,
        coordinates: v_r,
        residual,
        active: fits.into_iter().map(|f| f.active).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_signal_gives_rotation() {
        // sin t spans two delay modes; a third (noise) mode plays the forcing.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let dt = 0.01;
        let x: Vec<f64> = (0..20_000)
            .map(|i| (i as f64 * dt).sin() + 1e-6 * (rng.random::<f64>() - 0.5))
            .collect();
        let opts = FitOptions {
            rank: RankPolicy::Manual(3),
            lambda: 0.0,
            eps: 1e-9,
        };
        let fit = fit_havok(&x, dt, EmbeddingConfig::new(10, 20).unwrap(), opts).unwrap();
        let eig = fit.model.eigenvalues();
        assert_eq!(eig.len(), 2);
        for (re, im) in eig {
            assert!(re.abs() < 0.02, "{re}");
            assert!((im.abs() - 1.0).abs() < 0.02, "{im}");
        }
    }

    #[test]
    fn rank_one_is_rejected() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin()).collect();
        let opts = FitOptions {
            rank: RankPolicy::Manual(1),
            ..Default::default()
        };
        assert!(matches!(
            fit_havok(&x, 0.1, EmbeddingConfig::new(1, 5).unwrap(), opts),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let x: Vec<f64> = (0..500)
            .map(|i| (i as f64 * 0.05).sin() + 0.3 * (i as f64 * 0.21).cos())
            .collect();
        let opts = FitOptions {
            rank: RankPolicy::Manual(4),
            ..Default::default()
        };
        let fit = fit_havok(&x, 0.05, EmbeddingConfig::new(2, 8).unwrap(), opts).unwrap();
        let text = serde_json::to_string(&fit.model).unwrap();
        let back: HavokModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, fit.model);
    }
}
