use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const DEFAULT_OMEGA0: f64 = 6.0;

/// Magnitude scalogram (frequencies × time) of the analytic Morlet CWT.
///
/// The wavelet is applied in the frequency domain as
/// ψ̂(sω) = 2·exp(−(sω − ω₀)²/2) for ω > 0 with scale s = ω₀/(2πf), so a
/// unit-amplitude sinusoid at f produces a ridge of height ≈ 1 at f. The
/// signal is zero-padded to a power of two at least twice its length.
pub fn cwt_scalogram(x: &[f64], dt: f64, frequencies: &[f64], omega0: f64) -> Result<DMatrix<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    if !(omega0 > 0.0) {
        return Err(Error::Parameter(format!(
            "omega0 must be positive, got {omega0}"
        )));
    }
    let nyquist = 0.5 / dt;
    if let Some(f) = frequencies.iter().find(|&&f| !(f > 0.0 && f < nyquist)) {
        return Err(Error::Parameter(format!(
            "frequency {f} is outside (0, Nyquist = {nyquist})"
        )));
    }
    let n = x.len();
    let mut out = DMatrix::zeros(frequencies.len(), n);
    if n == 0 || frequencies.is_empty() {
        return Ok(out);
    }
    let len = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);

    let mut spectrum: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    spectrum.resize(len, Complex::new(0.0, 0.0));
    forward.process(&mut spectrum);

    let rows: Vec<Vec<f64>> = frequencies
        .par_iter()
        .map(|&f| {
            let s = omega0 / (2.0 * std::f64::consts::PI * f);
            let mut buf: Vec<Complex<f64>> = (0..len)
                .map(|k| {
                    // only strictly positive frequencies below len/2 carry weight
                    if k == 0 || 2 * k >= len {
                        return Complex::new(0.0, 0.0);
                    }
                    let omega = 2.0 * std::f64::consts::PI * k as f64 / (len as f64 * dt);
                    let w = 2.0 * (-0.5 * (s * omega - omega0).powi(2)).exp();
                    spectrum[k] * w
                })
                .collect();
            inverse.process(&mut buf);
            buf[..n].iter().map(|c| c.norm() / len as f64).collect()
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// `count` log-spaced frequencies between `lo` and `hi` inclusive.
pub fn log_frequencies(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}
