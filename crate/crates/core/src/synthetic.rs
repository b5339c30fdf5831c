//! Deterministic test signals: Lorenz x-coordinate, sine, linear chirp and
//! sine plus Gaussian noise.
//!
//! Noise comes from ChaCha8 seeded with `seed_from_u64`, and normal deviates
//! from `rand_distr::StandardNormal`, so a fixed `GeneratorSpec` gives
//! bit-identical output on every platform.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{ExperimentParams, ParamValue, Sequence};

/// Time discarded before Lorenz samples are recorded.
pub const LORENZ_TRANSIENT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Generator {
    Lorenz {
        #[serde(default = "lorenz_sigma")]
        sigma: f64,
        #[serde(default = "lorenz_rho")]
        rho: f64,
        #[serde(default = "lorenz_beta")]
        beta: f64,
        #[serde(default = "lorenz_initial")]
        initial: [f64; 3],
    },
    Sine {
        #[serde(default = "one")]
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    Chirp {
        #[serde(default = "one")]
        amplitude: f64,
        f0: f64,
        f1: f64,
    },
    NoisySine {
        #[serde(default = "one")]
        amplitude: f64,
        frequency: f64,
        noise_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn lorenz_sigma() -> f64 {
    10.0
}
fn lorenz_rho() -> f64 {
    28.0
}
fn lorenz_beta() -> f64 {
    8.0 / 3.0
}
fn lorenz_initial() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}
fn one() -> f64 {
    1.0
}

impl Generator {
    pub fn lorenz() -> Self {
        Generator::Lorenz {
            sigma: lorenz_sigma(),
            rho: lorenz_rho(),
            beta: lorenz_beta(),
            initial: lorenz_initial(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Generator::Lorenz { .. } => "lorenz",
            Generator::Sine { .. } => "sine",
            Generator::Chirp { .. } => "chirp",
            Generator::NoisySine { .. } => "noisy-sine",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub id: String,
    pub dt: f64,
    pub n_samples: usize,
    pub generator: Generator,
}

impl GeneratorSpec {
    pub fn new(id: impl Into<String>, dt: f64, n_samples: usize, generator: Generator) -> Self {
        Self {
            id: id.into(),
            dt,
            n_samples,
            generator,
        }
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<Sequence> {
    let (dt, n) = (spec.dt, spec.n_samples);
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    if n < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let t = |i: usize| i as f64 * dt;
    let values: Vec<f64> = match spec.generator {
        Generator::Lorenz {
            sigma,
            rho,
            beta,
            initial,
        } => lorenz_trajectory([sigma, rho, beta], initial, dt, n, LORENZ_TRANSIENT)
            .into_iter()
            .map(|s| s[0])
            .collect(),
        Generator::Sine {
            amplitude,
            frequency,
            phase,
        } => (0..n)
            .map(|i| amplitude * (2.0 * PI * frequency * t(i) + phase).sin())
            .collect(),
        Generator::Chirp { amplitude, f0, f1 } => {
            let span = t(n - 1);
            (0..n)
                .map(|i| {
                    let ti = t(i);
                    amplitude * (2.0 * PI * (f0 * ti + (f1 - f0) * ti * ti / (2.0 * span))).sin()
                })
                .collect()
        }
        Generator::NoisySine {
            amplitude,
            frequency,
            noise_sigma,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    amplitude * (2.0 * PI * frequency * t(i)).sin() + noise_sigma * z
                })
                .collect()
        }
    };
    let params = ExperimentParams::new(spec.id.clone())
        .with_attr("generator", ParamValue::Text(spec.generator.kind().into()));
    Sequence::new(values, dt, params)
}

/// Three families of `per_family` sequences each: unit-amplitude
/// low-frequency sines, half-amplitude high-frequency sines and linear
/// chirps of amplitude 2. Members of a family differ only by an amplitude
/// factor between 0.98 and 1.02. Sequence ids are `{family}-{index}`.
pub fn three_family_corpus(per_family: usize, dt: f64, n_samples: usize) -> Vec<GeneratorSpec> {
    let jitter = |i: usize| {
        if per_family > 1 {
            0.98 + 0.04 * i as f64 / (per_family - 1) as f64
        } else {
            1.0
        }
    };
    let span = n_samples as f64 * dt;
    // frequencies on Fourier bins of the full window
    let low = (0.25 * span).round().max(1.0) / span;
    let high = (2.5 * span).round().max(1.0) / span;
    let mut specs = Vec::with_capacity(3 * per_family);
    for i in 0..per_family {
        let g = Generator::Sine {
            amplitude: jitter(i),
            frequency: low,
            phase: 0.0,
        };
        specs.push(GeneratorSpec::new(format!("low-{i:02}"), dt, n_samples, g));
    }
    for i in 0..per_family {
        let g = Generator::Sine {
            amplitude: 0.5 * jitter(i),
            frequency: high,
            phase: 0.0,
        };
        specs.push(GeneratorSpec::new(format!("high-{i:02}"), dt, n_samples, g));
    }
    for i in 0..per_family {
        let g = Generator::Chirp {
            amplitude: 2.0 * jitter(i),
            f0: 0.5,
            f1: 4.0,
        };
        specs.push(GeneratorSpec::new(
            format!("chirp-{i:02}"),
            dt,
            n_samples,
            g,
        ));
    }
    specs
}

fn lorenz_rhs(p: [f64; 3], s: [f64; 3]) -> [f64; 3] {
    [
        p[0] * (s[1] - s[0]),
        s[0] * (p[1] - s[2]) - s[1],
        s[0] * s[1] - p[2] * s[2],
    ]
}

fn rk4_step(p: [f64; 3], s: [f64; 3], h: f64) -> [f64; 3] {
    let add =
        |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    let k1 = lorenz_rhs(p, s);
    let k2 = lorenz_rhs(p, add(s, k1, h / 2.0));
    let k3 = lorenz_rhs(p, add(s, k2, h / 2.0));
    let k4 = lorenz_rhs(p, add(s, k3, h));
    [
        s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        s[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

/// Full Lorenz state sampled every `dt` after discarding `transient` time
/// units. `params` is (σ, ρ, β).
pub fn lorenz_trajectory(
    params: [f64; 3],
    initial: [f64; 3],
    dt: f64,
    n: usize,
    transient: f64,
) -> Vec<[f64; 3]> {
    let mut s = initial;
    let skip = (transient / dt).round() as usize;
    for _ in 0..skip {
        s = rk4_step(params, s, dt);
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            s = rk4_step(params, s, dt);
        }
        out.push(s);
    }
    out
}
