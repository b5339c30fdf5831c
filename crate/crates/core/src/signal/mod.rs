//! Scalar measurement sequences and the datasets that hold them.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod csv;

pub use self::csv::{load_dataset, write_dataset_long, write_dataset_wide, CsvLayout, CsvSchema};

/// Relative tolerance on sample-interval agreement.
pub const DT_TOLERANCE: f64 = 1e-9;

/// A named experiment parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Real(f64),
    Text(String),
}

/// Identifier plus free-form parameters of the experiment that produced a
/// sequence (excitation frequency, baffle layout, ...).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attrs: BTreeMap<String, ParamValue>,
}

impl ExperimentParams {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            attrs: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: ParamValue) -> Self {
        self.attrs.insert(key.into(), value);
        self
    }
}

/// A uniformly sampled scalar series.
///
/// Holds at least two finite samples taken `dt` seconds apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    values: Vec<f64>,
    dt: f64,
    params: ExperimentParams,
}

impl Sequence {
    pub fn new(values: Vec<f64>, dt: f64, params: ExperimentParams) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Parameter(format!(
                "sample interval must be positive and finite, got {dt}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "sequence `{}` has {} samples, need at least 2",
                params.id,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                id: params.id.clone(),
                row: None,
                message: format!("sample {i} is not finite ({})", values[i]),
            });
        }
        Ok(Self { values, dt, params })
    }

    /// Shorthand for a sequence with an id and no attributes.
    pub fn from_values(id: impl Into<String>, values: Vec<f64>, dt: f64) -> Result<Self> {
        Self::new(values, dt, ExperimentParams::new(id))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn params(&self) -> &ExperimentParams {
        &self.params
    }

    pub fn id(&self) -> &str {
        &self.params.id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.dt, self.params.clone())
    }
}

/// Column-stacked collection of sequences sharing one sample interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn new(sequences: Vec<Sequence>) -> Result<Self> {
        let first = sequences
            .first()
            .ok_or_else(|| Error::InsufficientData("dataset has no sequences".into()))?;
        let dt = first.dt();
        let mut seen = HashSet::new();
        for s in &sequences {
            if !seen.insert(s.id()) {
                return Err(Error::Schema(format!("duplicate sequence id `{}`", s.id())));
            }
            if (s.dt() - dt).abs() > DT_TOLERANCE * dt {
                return Err(Error::Schema(format!(
                    "sequence `{}` has dt {} but the dataset uses {}",
                    s.id(),
                    s.dt(),
                    dt
                )));
            }
        }
        Ok(Self { sequences })
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn into_sequences(self) -> Vec<Sequence> {
        self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.sequences[0].dt()
    }

    pub fn get(&self, id: &str) -> Option<&Sequence> {
        self.sequences.iter().find(|s| s.id() == id)
    }
}

/// Population mean and standard deviation (divisor `n`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Z-score a sequence with the population standard deviation.
pub fn standardize(s: &Sequence) -> Result<Sequence> {
    let (mean, std) = mean_std(s.values());
    let scale = s.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if std == 0.0 || std <= 1e-14 * scale {
        return Err(Error::DegenerateSignal(format!(
            "sequence `{}` has zero variance",
            s.id()
        )));
    }
    s.with_values(s.values().iter().map(|v| (v - mean) / std).collect())
}

/// Split into `s[..split_index]` and `s[split_index..]`.
pub fn split(s: &Sequence, split_index: usize) -> Result<(Sequence, Sequence)> {
    if split_index < 1 || split_index >= s.len() {
        return Err(Error::Bounds(format!(
            "split index {split_index} outside 1..{} for sequence `{}`",
            s.len(),
            s.id()
        )));
    }
    // Halves may be a single sample long, which Sequence::new rejects.
    let (head, tail) = s.values().split_at(split_index);
    let part = |v: &[f64]| Sequence {
        values: v.to_vec(),
        dt: s.dt,
        params: s.params.clone(),
    };
    Ok((part(head), part(tail)))
}
