use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// α = (GᵀG + λI)⁻¹ Gᵀ y, solved as the least-squares problem
/// ‖[G; √λ I] α − [y; 0]‖ by Householder QR. The normal matrix is never
/// formed or inverted.
pub fn ridge_solve(g: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let (m, p) = g.shape();
    if y.nrows() != m {
        return Err(Error::Bounds(format!(
            "design has {m} rows but the targets have {}",
            y.nrows()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "ridge lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if p == 0 {
        return Ok(DMatrix::zeros(0, y.ncols()));
    }
    let singular = || Error::Singular("GᵀG is not invertible at lambda = 0; use lambda > 0".into());
    if lambda == 0.0 && m < p {
        return Err(singular());
    }
    let rows = if lambda > 0.0 { m + p } else { m };
    let mut aug = DMatrix::zeros(rows, p);
    aug.rows_mut(0, m).copy_from(g);
    let mut rhs = DMatrix::zeros(rows, y.ncols());
    rhs.rows_mut(0, m).copy_from(y);
    if lambda > 0.0 {
        let root = lambda.sqrt();
        for i in 0..p {
            aug[(m + i, i)] = root;
        }
    }
    let qr = aug.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    let tol = f64::EPSILON * rows as f64 * diag_max;
    if diag_max == 0.0 || r.diagonal().iter().any(|d| d.abs() <= tol) {
        return Err(singular());
    }
    let qty = qr.q().transpose() * rhs;
    r.solve_upper_triangular(&qty).ok_or_else(singular)
}

/// Result of the sequentially thresholded fit of one target.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFit {
    /// Full-length coefficients; pruned entries are exactly zero.
    pub coefficients: DVector<f64>,
    /// Surviving predictor indices, ascending.
    pub active: Vec<usize>,
    pub iterations: usize,
}

/// Ridge-solve, zero every |α_i| < eps, refit on the survivors, and repeat
/// until the active set stops changing.
pub fn sequential_threshold_ridge(
    g: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    eps: f64,
) -> Result<SparseFit> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!(
            "threshold eps must be > 0, got {eps}"
        )));
    }
    let p = g.ncols();
    let y = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let mut active: Vec<usize> = (0..p).collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let sub = g.select_columns(active.iter());
        let alpha = ridge_solve(&sub, &y, lambda)?;
        let keep: Vec<usize> = active
            .iter()
            .zip(alpha.column(0).iter())
            .filter(|(_, a)| a.abs() >= eps)
            .map(|(&i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyModel { eps });
        }
        if keep.len() == active.len() {
            let mut coefficients = DVector::zeros(p);
            for (&i, a) in active.iter().zip(alpha.column(0).iter()) {
                coefficients[i] = *a;
            }
            return Ok(SparseFit {
                coefficients,
                active,
                iterations,
            });
        }
        active = keep;
    }
}
