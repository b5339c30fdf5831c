use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Fourth-order central difference of every column,
/// (−f[i+2] + 8f[i+1] − 8f[i−1] + f[i−2]) / (12·dt).
///
/// The two boundary rows at each end have no centered stencil and are
/// dropped, so the result has `rows − 4` rows aligned with input rows
/// `2..rows−2`.
pub fn differentiate(v: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let n = v.nrows();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "fourth-order differencing needs at least 5 rows, got {n}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    let c = 1.0 / (12.0 * dt);
    Ok(DMatrix::from_fn(n - 4, v.ncols(), |i, j| {
        let k = i + 2;
        (-v[(k + 2, j)] + 8.0 * v[(k + 1, j)] - 8.0 * v[(k - 1, j)] + v[(k - 2, j)]) * c
    }))
}
