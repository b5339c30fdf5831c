//! Derivative-free simplex search and a finite-difference Newton polish,
//! used for the likelihoods without a tractable score equation.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ... and the simplex diameter below this.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            f_tol: 1e-11,
            x_tol: 1e-9,
        }
    }
}

/// Minimize `f` from `x0` with initial simplex edges `steps`.
///
/// Non-finite objective values are treated as +∞, so constraints can be
/// expressed by returning `f64::INFINITY` outside the feasible set. The
/// returned value is never worse than `f(x0)`.
pub fn nelder_mead<F>(f: F, x0: &[f64], steps: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if values[0] == f64::INFINITY {
            break;
        }
        let spread = (values[n] - values[0]).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if values[0].is_finite()
            && spread <= opts.f_tol * (1.0 + values[0].abs())
            && diameter <= opts.x_tol
        {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(gamma);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(rho);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=n {
            for j in 0..n {
                simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
            }
            values[i] = eval(&simplex[i]);
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    }
}

/// Refine a minimum with Newton steps on central finite-difference
/// derivatives. Steps that do not lower `f` are halved and eventually
/// abandoned, so the result is never worse than the input.
pub fn newton_polish<F>(f: F, start: Minimum, max_steps: usize) -> Minimum
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.x.len();
    let mut x = start.x.clone();
    let mut fx = start.value;
    if !fx.is_finite() {
        return start;
    }
    for _ in 0..max_steps {
        let h: Vec<f64> = x.iter().map(|v| 1e-4 * (1.0 + v.abs())).collect();
        let at = |dx: &[(usize, f64)]| {
            let mut p = x.clone();
            for &(i, d) in dx {
                p[i] += d;
            }
            f(&p)
        };
        let mut g = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            let fp = at(&[(i, h[i])]);
            let fm = at(&[(i, -h[i])]);
            g[i] = (fp - fm) / (2.0 * h[i]);
            hess[(i, i)] = (fp - 2.0 * fx + fm) / (h[i] * h[i]);
            for j in 0..i {
                let fpp = at(&[(i, h[i]), (j, h[j])]);
                let fpm = at(&[(i, h[i]), (j, -h[j])]);
                let fmp = at(&[(i, -h[i]), (j, h[j])]);
                let fmm = at(&[(i, -h[i]), (j, -h[j])]);
                let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        if !(g.iter().all(|v| v.is_finite()) && hess.iter().all(|v| v.is_finite())) {
            break;
        }
        let Some(chol) = hess.clone().cholesky() else {
            break;
        };
        let step = chol.solve(&g);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx {
                let gain = fx - ft;
                x = trial;
                fx = ft;
                improved = gain > 1e-15 * (1.0 + fx.abs());
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Minimum {
        x,
        value: fx,
        iterations: start.iterations,
        converged: start.converged,
    }
}
