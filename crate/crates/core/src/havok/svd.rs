use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thin SVD X = U·diag(S)·Vᵀ with k = min(rows, cols).
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// rows × k
    pub u: DMatrix<f64>,
    /// k singular values, non-increasing.
    pub s: DVector<f64>,
    /// cols × k
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*sj);
        }
        us * self.v.transpose()
    }
}

/// Thin SVD with a deterministic sign convention: the largest-magnitude
/// entry of every left singular vector is positive (first one on ties).
///
/// Wide matrices (the usual Hankel shape) are reduced with a QR
/// factorization of Xᵀ first, so only a small square SVD is needed.
pub fn svd(x: &DMatrix<f64>) -> Result<SvdFactors> {
    if x.is_empty() {
        return Err(Error::InsufficientData("SVD of an empty matrix".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data {
            id: "hankel".into(),
            row: None,
            message: "matrix has non-finite entries".into(),
        });
    }
    let (mut u, s, mut v) = if x.ncols() > 2 * x.nrows() {
        // Xᵀ = Q R, R = Ur Σ Wᵀ  ⇒  X = W Σ (Q Ur)ᵀ
        let qr = x.transpose().qr();
        let (q, r) = (qr.q(), qr.r());
        let inner = SVD::new(r, true, true);
        let ur = inner.u.expect("requested U");
        let wt = inner.v_t.expect("requested V");
        (wt.transpose(), inner.singular_values, q * ur)
    } else {
        let full = SVD::new(x.clone(), true, true);
        let u = full.u.expect("requested U");
        let vt = full.v_t.expect("requested V");
        (u, full.singular_values, vt.transpose())
    };
    for j in 0..u.ncols() {
        let mut arg = 0;
        for i in 1..u.nrows() {
            if u[(i, j)].abs() > u[(arg, j)].abs() {
                arg = i;
            }
        }
        if u[(arg, j)] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(SvdFactors { u, s, v })
}

/// How many SVD modes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankPolicy {
    /// Fixed rank, capped at the number of singular values.
    Manual(usize),
    /// Smallest rank capturing this fraction of Σσ².
    Energy(f64),
    /// Optimal hard threshold for an unknown noise level
    /// (ω(β)·median σ, with the cubic approximation of ω).
    HardThreshold,
}

impl std::str::FromStr for RankPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(r) = s.parse::<usize>() {
            return Ok(RankPolicy::Manual(r));
        }
        if s.eq_ignore_ascii_case("hard-threshold") || s.eq_ignore_ascii_case("auto") {
            return Ok(RankPolicy::HardThreshold);
        }
        if let Some(rest) = s.strip_prefix("energy:") {
            let eta: f64 = rest
                .parse()
                .map_err(|_| Error::Parameter(format!("bad energy fraction in `{s}`")))?;
            return Ok(RankPolicy::Energy(eta));
        }
        Err(Error::Parameter(format!(
            "rank policy `{s}` is not an integer, `energy:<fraction>` or `hard-threshold`"
        )))
    }
}

impl std::fmt::Display for RankPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RankPolicy::Manual(r) => write!(f, "{r}"),
            RankPolicy::Energy(e) => write!(f, "energy:{e}"),
            RankPolicy::HardThreshold => f.write_str("hard-threshold"),
        }
    }
}

/// Truncation rank for singular values `s` of a `shape.0 × shape.1`
/// matrix. A forced model needs at least two modes.
pub fn truncation_rank(s: &[f64], policy: RankPolicy, shape: (usize, usize)) -> Result<usize> {
    if s.is_empty() {
        return Err(Error::InsufficientData("no singular values".into()));
    }
    let k = s.len();
    let r = match policy {
        RankPolicy::Manual(r) => r.min(k),
        RankPolicy::Energy(eta) => {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Parameter(format!(
                    "energy fraction must lie in (0, 1], got {eta}"
                )));
            }
            let total: f64 = s.iter().map(|v| v * v).sum();
            let mut acc = 0.0;
            let mut r = k;
            for (i, v) in s.iter().enumerate() {
                acc += v * v;
                if acc >= eta * total * (1.0 - 1e-12) {
                    r = i + 1;
                    break;
                }
            }
            r
        }
        RankPolicy::HardThreshold => {
            let (m, n) = (shape.0.min(shape.1) as f64, shape.0.max(shape.1) as f64);
            let beta = m / n;
            let omega = 0.56 * beta.powi(3) - 0.95 * beta * beta + 1.82 * beta + 1.43;
            let mut sorted = s.to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = if k % 2 == 1 {
                sorted[k / 2]
            } else {
                0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
            };
            s.iter().filter(|&&v| v > omega * median).count()
        }
    };
    // Modes below round-off carry no signal and cannot be projected onto.
    let tol = s[0] * shape.0.max(shape.1) as f64 * f64::EPSILON;
    let numerical = s.iter().take_while(|&&v| v > tol).count();
    let r = r.min(numerical);
    if r < 2 {
        return Err(Error::Parameter(format!(
            "rank policy {policy} keeps {r} mode(s); a forced model needs at least 2"
        )));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check(x: &DMatrix<f64>) {
        let f = svd(x).unwrap();
        let rel = (f.reconstruct() - x).norm() / x.norm();
        assert!(rel <= 1e-10, "reconstruction {rel}");
        let k = f.s.len();
        assert!(((f.u.transpose() * &f.u) - DMatrix::identity(k, k)).amax() < 1e-10);
        assert!(((f.v.transpose() * &f.v) - DMatrix::identity(k, k)).amax() < 1e-10);
        for w in f.s.as_slice().windows(2) {
            assert!(w[0] >= w[1] && w[1] >= 0.0);
        }
        for j in 0..k {
            let col = f.u.column(j);
            let big = col
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn identity_and_rank_one() {
        let f = svd(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(f.s.as_slice(), &[1.0, 1.0, 1.0]);
        check(&DMatrix::identity(3, 3));

        let u = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let v = DVector::from_vec(vec![3.0, 0.0, 4.0, 0.0]);
        let f = svd(&(&u * v.transpose())).unwrap();
        assert!((f.s[0] - 15.0).abs() < 1e-12);
        assert!(f.s[1].abs() < 1e-12);
    }

    #[test]
    fn random_wide_tall_and_square() {
        check(&random(40, 200, 1));
        check(&random(200, 40, 2));
        check(&random(30, 30, 3));
        check(&random(5, 1000, 4));
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = random(3, 4, 5);
        x[(1, 2)] = f64::NAN;
        assert!(matches!(svd(&x), Err(Error::Data { .. })));
    }

    #[test]
    fn rank_policies() {
        let s: Vec<f64> = (0..40).map(|i| 40.0 - i as f64).collect();
        assert_eq!(
            truncation_rank(&s, RankPolicy::Manual(12), (40, 1000)).unwrap(),
            12
        );
        assert_eq!(
            truncation_rank(&s, RankPolicy::Manual(100), (40, 1000)).unwrap(),
            40
        );
        assert_eq!(
            truncation_rank(&s, RankPolicy::Energy(1.0), (40, 1000)).unwrap(),
            40
        );
        assert!(matches!(
            truncation_rank(&[10.0, 1e-12, 1e-13], RankPolicy::Energy(0.99), (3, 10)),
            Err(Error::Parameter(_))
        ));
        assert!(truncation_rank(&s, RankPolicy::Manual(1), (40, 1000)).is_err());
        let exact = [3.0, 1.0, 1e-15, 0.0];
        assert_eq!(
            truncation_rank(&exact, RankPolicy::Manual(4), (4, 100)).unwrap(),
            2
        );

        // planted rank 3 plus small noise
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = random(50, 3, 10) * random(3, 400, 11) * 10.0;
        let noise = DMatrix::from_fn(50, 400, |_, _| rng.random_range(-0.01..0.01));
        let f = svd(&(a + noise)).unwrap();
        assert_eq!(
            truncation_rank(f.s.as_slice(), RankPolicy::HardThreshold, (50, 400)).unwrap(),
            3
        );
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("12".parse::<RankPolicy>().unwrap(), RankPolicy::Manual(12));
        assert_eq!(
            "energy:0.9".parse::<RankPolicy>().unwrap(),
            RankPolicy::Energy(0.9)
        );
        assert_eq!(
            "hard-threshold".parse::<RankPolicy>().unwrap(),
            RankPolicy::HardThreshold
        );
        assert!("twelve".parse::<RankPolicy>().is_err());
    }
}
