//! Forward simulation of fitted models, signal reconstruction, forcing
//! activity detection, ensemble error statistics and wavelet scalograms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embedding::embed;
use crate::error::{Error, Result};
use crate::havok::HavokModel;

mod cwt;
mod errors;

pub use cwt::{cwt_scalogram, log_frequencies, DEFAULT_OMEGA0};
pub use errors::{error_evolution, ErrorEvolution, ErrorHistogram};

pub const DEFAULT_FORCING_THRESHOLD: f64 = 0.045;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForcingMode {
    /// Supplied samples of the forcing coordinate (teacher forcing).
    Measured,
    Zero,
    /// Last training value of the forcing coordinate, repeated.
    Held,
}

impl std::str::FromStr for ForcingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "measured" => Ok(ForcingMode::Measured),
            "zero" => Ok(ForcingMode::Zero),
            "held" => Ok(ForcingMode::Held),
            _ => Err(Error::Parameter(format!(
                "forcing mode `{s}` is not one of measured, zero, held"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Forcing<'a> {
    Measured(&'a [f64]),
    Zero,
    Held,
}

impl Forcing<'_> {
    pub fn mode(&self) -> ForcingMode {
        match self {
            Forcing::Measured(_) => ForcingMode::Measured,
            Forcing::Zero => ForcingMode::Zero,
            Forcing::Held => ForcingMode::Held,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// steps × (r−1); row 0 is the initial state.
    pub v_traj: DMatrix<f64>,
    /// Forcing value applied over each step.
    pub forcing: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub forcing_mode: ForcingMode,
    pub horizon: usize,
}

/// Integrate v̇ = A v + B u with classical RK4, u held constant over each
/// step. Returns `steps` states starting at `v0`.
pub fn simulate(
    model: &HavokModel,
    v0: &[f64],
    forcing: Forcing<'_>,
    steps: usize,
) -> Result<ForecastResult> {
    let m = model.linear_dim();
    if v0.len() != m {
        return Err(Error::Bounds(format!(
            "initial state has {} entries, the model has {m} linear coordinates",
            v0.len()
        )));
    }
    let u: Vec<f64> = match forcing {
        Forcing::Measured(series) => {
            if series.len() < steps {
                return Err(Error::Bounds(format!(
                    "measured forcing has {} samples, {steps} steps requested",
                    series.len()
                )));
            }
            series[..steps].to_vec()
        }
        Forcing::Zero => vec![0.0; steps],
        Forcing::Held => vec![model.last_forcing; steps],
    };
    let h = model.dt;
    let rhs = |v: &DVector<f64>, u: f64| &model.a * v + &model.b * u;
    let mut traj = DMatrix::zeros(steps, m);
    let mut v = DVector::from_column_slice(v0);
    for t in 0..steps {
        traj.set_row(t, &v.transpose());
        if t + 1 == steps {
            break;
        }
        let k1 = rhs(&v, u[t]);
        let k2 = rhs(&(&v + &k1 * (h / 2.0)), u[t]);
        let k3 = rhs(&(&v + &k2 * (h / 2.0)), u[t]);
        let k4 = rhs(&(&v + &k3 * h), u[t]);
        v += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    let mut full = DMatrix::zeros(steps, m + 1);
    full.columns_mut(0, m).copy_from(&traj);
    full.set_column(m, &DVector::from_column_slice(&u));
    let x_hat = reconstruct(model, &full)?;
    Ok(ForecastResult {
        v_traj: traj,
        forcing: u,
        x_hat,
        forcing_mode: forcing.mode(),
        horizon: steps,
    })
}

/// x̂_t = first row of U_r·S_r·v_tᵀ. `v` has r columns, or r−1 columns
/// in which case the forcing coordinate is taken as zero.
pub fn reconstruct(model: &HavokModel, v: &DMatrix<f64>) -> Result<Vec<f64>> {
    let cols = v.ncols();
    if cols != model.r && cols != model.r - 1 {
        return Err(Error::Bounds(format!(
            "trajectory has {cols} columns, expected {} or {}",
            model.r - 1,
            model.r
        )));
    }
    let weights: Vec<f64> = (0..cols)
        .map(|j| model.u_r[(0, j)] * model.s_r[j])
        .collect();
    Ok(v.row_iter()
        .map(|row| row.iter().zip(&weights).map(|(a, w)| a * w).sum())
        .collect())
}

/// Delay coordinates of new data in the model's basis, v = S⁻¹ U_rᵀ χ.
/// One row per Hankel column of `x`.
pub fn project_coordinates(model: &HavokModel, x: &[f64]) -> Result<DMatrix<f64>> {
    let hankel = embed(x, model.embedding)?;
    let mut proj = model.u_r.transpose() * hankel.data;
    for (j, s) in model.s_r.iter().enumerate() {
        if *s == 0.0 {
            return Err(Error::Singular(format!(
                "singular value {j} of the model is zero"
            )));
        }
        proj.row_mut(j).scale_mut(1.0 / s);
    }
    Ok(proj.transpose())
}

/// Half-open index range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..self.end).contains(&i)
    }
}

/// Maximal runs with |v| > `eps`. Runs separated by fewer than
/// `merge_window` inactive samples are joined.
pub fn forcing_active(v: &[f64], eps: f64, merge_window: usize) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::new();
    let mut start = None;
    for (i, x) in v.iter().enumerate() {
        match (x.abs() > eps, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(Interval { start: s, end: i });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Interval {
            start: s,
            end: v.len(),
        });
    }
    if merge_window == 0 {
        return out;
    }
    let mut merged: Vec<Interval> = Vec::with_capacity(out.len());
    for iv in out {
        match merged.last_mut() {
            Some(last) if iv.start - last.end < merge_window => last.end = iv.end,
            _ => merged.push(iv),
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingConfig;
    use crate::havok::{fit_havok, svd, FitOptions, RankPolicy};
    use proptest::prelude::*;

    fn toy_model(a: DMatrix<f64>, b: Vec<f64>, dt: f64) -> HavokModel {
        let m = a.nrows();
        HavokModel {
            r: m + 1,
            embedding: EmbeddingConfig::new(1, m + 1).unwrap(),
            dt,
            ridge_lambda: 0.0,
            threshold: 1e-6,
            a,
            b: DVector::from_vec(b),
            u_r: DMatrix::identity(m + 1, m + 1),
            s_r: DVector::from_element(m + 1, 1.0),
            singular_values: vec![1.0; m + 1],
            last_forcing: 0.5,
        }
    }

    #[test]
    fn null_dynamics_is_constant() {
        let model = toy_model(DMatrix::zeros(3, 3), vec![0.0; 3], 0.1);
        let res = simulate(&model, &[1.0, -2.0, 3.0], Forcing::Held, 50).unwrap();
        for row in res.v_traj.row_iter() {
            assert_eq!(
                row.iter().copied().collect::<Vec<_>>(),
                vec![1.0, -2.0, 3.0]
            );
        }
        assert_eq!(res.x_hat.len(), 50);
    }

    #[test]
    fn harmonic_energy_conserved() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let model = toy_model(a, vec![0.0, 0.0], 1e-3);
        let res = simulate(&model, &[1.0, 0.0], Forcing::Zero, 10_001).unwrap();
        for row in res.v_traj.row_iter() {
            assert!((row.norm_squared() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn forcing_length_checked() {
        let model = toy_model(DMatrix::zeros(1, 1), vec![1.0], 0.1);
        assert!(matches!(
            simulate(&model, &[0.0], Forcing::Measured(&[1.0, 2.0]), 3),
            Err(Error::Bounds(_))
        ));
        assert!(simulate(&model, &[0.0, 1.0], Forcing::Zero, 3).is_err());
        // constant forcing integrates exactly: v = u·t
        let res = simulate(&model, &[0.0], Forcing::Measured(&[2.0; 5]), 5).unwrap();
        assert!((res.v_traj[(4, 0)] - 0.8).abs() < 1e-14);
    }

    fn sample_fit(rank: usize) -> (Vec<f64>, crate::havok::HavokFit) {
        let x: Vec<f64> = (0..600)
            .map(|i| {
                let t = i as f64 * 0.05;
                t.sin() + 0.4 * (2.7 * t).cos() + 0.1 * (7.1 * t).sin()
            })
            .collect();
        let opts = FitOptions {
            rank: RankPolicy::Manual(rank),
            lambda: 1e-6,
            eps: 1e-12,
        };
        let fit = fit_havok(&x, 0.05, EmbeddingConfig::new(1, 12).unwrap(), opts).unwrap();
        (x, fit)
    }

    #[test]
    fn reconstruction_bounded_by_discarded_modes() {
        for rank in [2, 4, 7, 12] {
            let (x, fit) = sample_fit(rank);
            let xh = reconstruct(&fit.model, &fit.coordinates).unwrap();
            let err: f64 = xh
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let tail: f64 = fit.model.singular_values[rank..]
                .iter()
                .map(|s| s * s)
                .sum::<f64>()
                .sqrt();
            assert!(err <= tail + 1e-10, "rank {rank}: {err} > {tail}");
            if rank == 12 {
                assert!(err < 1e-10);
            }
        }
    }

    #[test]
    fn zero_trajectory_reconstructs_zero() {
        let (_, fit) = sample_fit(4);
        let xh = reconstruct(&fit.model, &DMatrix::zeros(10, 3)).unwrap();
        assert!(xh.iter().all(|&v| v == 0.0));
        assert!(reconstruct(&fit.model, &DMatrix::zeros(10, 2)).is_err());
    }

    #[test]
    fn projection_recovers_training_coordinates() {
        let (x, fit) = sample_fit(4);
        let v = project_coordinates(&fit.model, &x).unwrap();
        assert!((v - &fit.coordinates).amax() < 1e-9);
        // sanity: the same coordinates via a fresh SVD
        let h = crate::embedding::embed(&x, fit.model.embedding).unwrap();
        let f = svd(&h.data).unwrap();
        assert!((f.v.columns(0, 4) - &fit.coordinates).amax() < 1e-12);
    }

    #[test]
    fn forcing_active_examples() {
        assert!(forcing_active(&[0.0; 10], 0.045, 0).is_empty());
        assert_eq!(
            forcing_active(&[0.0, 0.05, 0.0], 0.045, 0),
            vec![Interval { start: 1, end: 2 }]
        );
        let v = [0.1, 0.0, 0.1, 0.0, 0.0, -0.1];
        assert_eq!(forcing_active(&v, 0.05, 0).len(), 3);
        assert_eq!(
            forcing_active(&v, 0.05, 2),
            vec![Interval { start: 0, end: 3 }, Interval { start: 5, end: 6 }]
        );
        assert_eq!(
            forcing_active(&v, 0.05, 3),
            vec![Interval { start: 0, end: 6 }]
        );
    }

    proptest! {
        #[test]
        fn forcing_intervals_partition_exactly(v in prop::collection::vec(-0.1f64..0.1, 0..60)) {
            let eps = 0.045;
            let ivs = forcing_active(&v, eps, 0);
            for w in ivs.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
            for (i, x) in v.iter().enumerate() {
                let inside = ivs.iter().any(|iv| iv.contains(i));
                prop_assert_eq!(inside, x.abs() > eps);
            }
        }
    }
}
