//! CSV ingestion and export.
//!
//! Two layouts are understood:
//!
//! * **wide**: header row of sequence ids, optionally led by a time column;
//!   one sequence per column.
//! * **long**: columns `id`, `t`, `value`; rows of one id keep file order.
//!
//! Floats are written with 17 significant digits so a load/export/load cycle
//! reproduces every finite sample bit for bit.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Sequence, DT_TOLERANCE};
use crate::error::{Error, Result};
use crate::output::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsvLayout {
    #[default]
    Wide,
    Long,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    #[serde(default)]
    pub layout: CsvLayout,
    /// Sample interval, required when the file carries no time column.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_time_column")]
    pub time_column: String,
}

fn default_time_column() -> String {
    "t".to_string()
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            layout: CsvLayout::Wide,
            dt: None,
            time_column: default_time_column(),
        }
    }
}

impl CsvSchema {
    pub fn wide() -> Self {
        Self::default()
    }

    pub fn long() -> Self {
        Self {
            layout: CsvLayout::Long,
            ..Self::default()
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    match schema.layout {
        CsvLayout::Wide => read_wide(&mut reader, schema),
        CsvLayout::Long => read_long(&mut reader, schema),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        column: String::new(),
        message: e.to_string(),
    }
}

fn parse_cell(raw: &str, line: u64, column: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|e| Error::Parse {
        line,
        column: column.to_string(),
        message: format!("`{raw}` is not a number ({e})"),
    })
}

fn check_finite(v: f64, line: u64, id: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Data {
            id: id.to_string(),
            row: Some(line),
            message: format!("sample {v} is not finite"),
        })
    }
}

/// Infer a uniform step from a time column.
fn infer_dt(times: &[f64], what: &str) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{what}: need at least two time stamps"
        )));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Schema(format!(
            "{what}: time column is not increasing"
        )));
    }
    for (i, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if (step - dt).abs() > DT_TOLERANCE * dt {
            return Err(Error::Schema(format!(
                "{what}: non-uniform time step {step} after sample {i} (expected {dt})"
            )));
        }
    }
    Ok(dt)
}

fn resolve_dt(inferred: Option<f64>, schema: &CsvSchema) -> Result<f64> {
    match (inferred, schema.dt) {
        (Some(a), Some(b)) if (a - b).abs() > DT_TOLERANCE * b => Err(Error::Schema(format!(
            "time column implies dt = {a} but the schema gives {b}"
        ))),
        (Some(a), _) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Err(Error::Schema(
            "no time column and no dt given in the schema".into(),
        )),
    }
}

fn read_wide<R: std::io::Read>(reader: &mut csv::Reader<R>, schema: &CsvSchema) -> Result<Dataset> {
    let headers = reader.headers().map_err(csv_error)?.clone();
    let has_time = headers.get(0) == Some(schema.time_column.as_str());
    let ids: Vec<String> = headers
        .iter()
        .skip(usize::from(has_time))
        .map(str::to_string)
        .collect();
    if ids.is_empty() {
        return Err(Error::Schema("no sequence columns in header".into()));
    }

    let mut times = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut cells = record.iter();
        if has_time {
            let raw = cells.next().unwrap_or_default();
            times.push(parse_cell(raw, line, &schema.time_column)?);
        }
        for ((raw, id), col) in cells.zip(&ids).zip(columns.iter_mut()) {
            let v = parse_cell(raw, line, id)?;
            col.push(check_finite(v, line, id)?);
        }
    }

    let inferred = if has_time {
        Some(infer_dt(&times, "time column")?)
    } else {
        None
    };
    let dt = resolve_dt(inferred, schema)?;
    let sequences = ids
        .into_iter()
        .zip(columns)
        .map(|(id, values)| Sequence::from_values(id, values, dt))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(sequences)
}

fn read_long<R: std::io::Read>(reader: &mut csv::Reader<R>, schema: &CsvSchema) -> Result<Dataset> {
    let headers = reader.headers().map_err(csv_error)?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let id_col =
        find("id").ok_or_else(|| Error::Schema("long layout needs an `id` column".into()))?;
    let value_col =
        find("value").ok_or_else(|| Error::Schema("long layout needs a `value` column".into()))?;
    let time_col = find(&schema.time_column);

    // (id, times, values) in first-appearance order
    let mut groups: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record.get(id_col).unwrap_or_default().to_string();
        let value = parse_cell(record.get(value_col).unwrap_or_default(), line, "value")?;
        let value = check_finite(value, line, &id)?;
        let t = match time_col {
            Some(c) => Some(parse_cell(
                record.get(c).unwrap_or_default(),
                line,
                &schema.time_column,
            )?),
            None => None,
        };
        let slot = match groups.iter().position(|g| g.0 == id) {
            Some(i) => i,
            None => {
                groups.push((id, Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        let group = &mut groups[slot];
        if let Some(t) = t {
            group.1.push(t);
        }
        group.2.push(value);
    }
    if groups.is_empty() {
        return Err(Error::Schema("file has no data rows".into()));
    }

    let sequences = groups
        .into_iter()
        .map(|(id, times, values)| {
            let inferred = if time_col.is_some() {
                Some(infer_dt(&times, &format!("sequence `{id}`"))?)
            } else {
                None
            };
            let dt = resolve_dt(inferred, schema)?;
            Sequence::from_values(id, values, dt)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(sequences)
}

/// Write every sequence as a column behind a leading `t` column. All
/// sequences must have the same length.
pub fn write_dataset_wide(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = dataset.sequences()[0].len();
    if dataset.sequences().iter().any(|s| s.len() != n) {
        return Err(Error::Schema(
            "wide layout needs sequences of equal length; use the long layout".into(),
        ));
    }
    let mut out = String::new();
    out.push('t');
    for s in dataset.sequences() {
        out.push(',');
        out.push_str(s.id());
    }
    out.push('\n');
    let dt = dataset.dt();
    for i in 0..n {
        out.push_str(&fmt_f64(i as f64 * dt));
        for s in dataset.sequences() {
            out.push(',');
            out.push_str(&fmt_f64(s.values()[i]));
        }
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn write_dataset_long(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("id,t,value\n");
    for s in dataset.sequences() {
        for (i, v) in s.values().iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                s.id(),
                fmt_f64(i as f64 * s.dt()),
                fmt_f64(*v)
            ));
        }
    }
    write_file(path.as_ref(), out.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    crate::output::write_bytes(path, bytes)
}
