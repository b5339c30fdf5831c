//! Pipeline configuration, read from TOML. Every block is optional and
//! unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::cluster::{KChoice, DEFAULT_ENERGY_TARGET, DEFAULT_MAX_ITER};
use crate::embedding::{DEFAULT_A_TOL, DEFAULT_BINS, DEFAULT_DROP_THRESHOLD, DEFAULT_R_TOL};
use crate::error::{Error, Result};
use crate::forecast::{ForcingMode, DEFAULT_FORCING_THRESHOLD};
use crate::havok::{RankPolicy, DEFAULT_EPS, DEFAULT_LAMBDA};
use crate::signal::{CsvLayout, CsvSchema};
use crate::stats::{Family, DEFAULT_SIGNIFICANCE};
use crate::synthetic::GeneratorSpec;

/// `"auto"` or a positive integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AutoOr {
    #[default]
    Auto,
    Value(usize),
}

impl fmt::Display for AutoOr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutoOr::Auto => f.write_str("auto"),
            AutoOr::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for AutoOr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AutoOr::Auto);
        }
        s.parse::<usize>()
            .map(AutoOr::Value)
            .map_err(|_| Error::Config(format!("expected `auto` or a positive integer, got `{s}`")))
    }
}

impl Serialize for AutoOr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AutoOr::Auto => s.serialize_str("auto"),
            AutoOr::Value(v) => s.serialize_u64(*v as u64),
        }
    }
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = AutoOr;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"auto\" or a positive integer")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<AutoOr, E> {
                usize::try_from(v)
                    .map(AutoOr::Value)
                    .map_err(|_| E::custom(format!("expected a positive integer, got {v}")))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<AutoOr, E> {
                Ok(AutoOr::Value(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<AutoOr, E> {
                v.parse().map_err(|e: Error| E::custom(e))
            }
        }
        d.deserialize_any(V)
    }
}

/// Rank policy as written in config: an integer, `"hard-threshold"` or
/// `"energy:<fraction>"`.
mod rank_policy {
    use super::*;

    pub fn serialize<S: Serializer>(p: &RankPolicy, s: S) -> std::result::Result<S::Ok, S::Error> {
        match p {
            RankPolicy::Manual(r) => s.serialize_u64(*r as u64),
            other => s.serialize_str(&other.to_string()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<RankPolicy, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = RankPolicy;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an integer rank, \"hard-threshold\" or \"energy:<fraction>\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<RankPolicy, E> {
                usize::try_from(v)
                    .map(RankPolicy::Manual)
                    .map_err(|_| E::custom(format!("rank must be positive, got {v}")))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<RankPolicy, E> {
                Ok(RankPolicy::Manual(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<RankPolicy, E> {
                v.parse().map_err(|e: Error| E::custom(e))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// CSV file, resolved relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub layout: CsvLayout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_time_column")]
    pub time_column: String,
    /// Synthetic sequences, used instead of `path`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generate: Vec<GeneratorSpec>,
}

fn default_time_column() -> String {
    "t".into()
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            path: None,
            layout: CsvLayout::Wide,
            dt: None,
            time_column: default_time_column(),
            generate: Vec::new(),
        }
    }
}

impl InputConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            layout: self.layout,
            dt: self.dt,
            time_column: self.time_column.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub k: AutoOr,
    pub k_min: usize,
    pub k_max: usize,
    pub energy_target: f64,
    pub max_iter: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k: AutoOr::Auto,
            k_min: 2,
            k_max: 30,
            energy_target: DEFAULT_ENERGY_TARGET,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl ClusterConfig {
    pub fn k_choice(&self) -> KChoice {
        match self.k {
            AutoOr::Auto => KChoice::Auto {
                min: self.k_min,
                max: self.k_max,
            },
            AutoOr::Value(k) => KChoice::Fixed(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingBlock {
    pub tau: AutoOr,
    pub dim: AutoOr,
    pub tau_max: usize,
    pub d_max: usize,
    pub bins: usize,
    pub r_tol: f64,
    pub a_tol: f64,
    pub drop_threshold: f64,
}

impl Default for EmbeddingBlock {
    fn default() -> Self {
        Self {
            tau: AutoOr::Auto,
            dim: AutoOr::Auto,
            tau_max: 20,
            d_max: 50,
            bins: DEFAULT_BINS,
            r_tol: DEFAULT_R_TOL,
            a_tol: DEFAULT_A_TOL,
            drop_threshold: DEFAULT_DROP_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    #[serde(with = "rank_policy")]
    pub rank: RankPolicy,
    pub lambda: f64,
    pub eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            rank: RankPolicy::Manual(15),
            lambda: DEFAULT_LAMBDA,
            eps: DEFAULT_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    /// Training fraction; ignored when `split_index` is set.
    pub split: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_index: Option<usize>,
    pub horizon: usize,
    pub forcing: ForcingMode,
    pub forcing_threshold: f64,
    pub merge_window: usize,
    pub histogram_instants: Vec<usize>,
    pub histogram_bins: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            split: 0.8,
            split_index: None,
            horizon: 500,
            forcing: ForcingMode::Measured,
            forcing_threshold: DEFAULT_FORCING_THRESHOLD,
            merge_window: 0,
            histogram_instants: vec![100, 1000, 2000],
            histogram_bins: 20,
        }
    }
}

impl ForecastConfig {
    /// Index of the first test sample for a sequence of `len` samples.
    pub fn split_point(&self, len: usize) -> usize {
        match self.split_index {
            Some(i) => i,
            None => (self.split * len as f64).floor() as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub families: Vec<Family>,
    pub significance: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            significance: DEFAULT_SIGNIFICANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub embedding: EmbeddingBlock,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub forecast: ForecastConfig,
    #[serde(default)]
    pub stats: StatsConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("havok-out")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: default_output_dir(),
            input: InputConfig::default(),
            cluster: ClusterConfig::default(),
            embedding: EmbeddingBlock::default(),
            model: ModelConfig::default(),
            forecast: ForecastConfig::default(),
            stats: StatsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate; a relative input path is resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))?;
        // Relative paths in a config file are relative to that file.
        if let Some(dir) = path.parent() {
            if let Some(p) = cfg.input.path.as_mut().filter(|p| p.is_relative()) {
                *p = dir.join(&*p);
            }
            if cfg.output_dir.is_relative() {
                cfg.output_dir = dir.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (&self.input.path, self.input.generate.is_empty()) {
            (Some(_), false) => {
                return bad("input: set either `path` or `generate`, not both".into())
            }
            (None, true) => return bad("input: one of `path` or `generate` is required".into()),
            _ => {}
        }
        let c = &self.cluster;
        if !(c.energy_target > 0.0 && c.energy_target <= 1.0) {
            return bad(format!(
                "cluster.energy_target must lie in (0, 1], got {}",
                c.energy_target
            ));
        }
        if c.max_iter == 0 {
            return bad("cluster.max_iter must be at least 1".into());
        }
        if c.k == AutoOr::Value(0) {
            return bad("cluster.k must be at least 1".into());
        }
        if c.k_min < 2 || c.k_max < c.k_min {
            return bad(format!(
                "cluster.k_min..k_max must satisfy 2 <= k_min <= k_max, got {}..{}",
                c.k_min, c.k_max
            ));
        }
        let e = &self.embedding;
        if e.tau == AutoOr::Value(0) || e.dim == AutoOr::Value(0) {
            return bad("embedding.tau and embedding.dim must be at least 1".into());
        }
        if e.tau_max < 2 || e.d_max < 2 || e.bins < 2 {
            return bad("embedding.tau_max, d_max and bins must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&e.drop_threshold) || e.r_tol <= 0.0 || e.a_tol <= 0.0 {
            return bad(
                "embedding: drop_threshold must lie in [0, 1]; r_tol and a_tol must be positive"
                    .into(),
            );
        }
        let m = &self.model;
        if !(m.lambda >= 0.0 && m.lambda.is_finite()) || !(m.eps >= 0.0 && m.eps.is_finite()) {
            return bad(format!(
                "model.lambda and model.eps must be finite and >= 0, got {} and {}",
                m.lambda, m.eps
            ));
        }
        match m.rank {
            RankPolicy::Manual(r) if r < 2 => {
                return bad(format!("model.rank must be at least 2, got {r}"))
            }
            RankPolicy::Energy(eta) if !(eta > 0.0 && eta <= 1.0) => {
                return bad(format!(
                    "model.rank energy fraction must lie in (0, 1], got {eta}"
                ))
            }
            _ => {}
        }
        let f = &self.forecast;
        if f.split_index.is_none() && !(f.split > 0.0 && f.split < 1.0) {
            return bad(format!(
                "forecast.split must lie in (0, 1), got {}",
                f.split
            ));
        }
        if f.horizon < 2 {
            return bad("forecast.horizon must be at least 2".into());
        }
        if !(f.forcing_threshold > 0.0) {
            return bad("forecast.forcing_threshold must be positive".into());
        }
        let s = &self.stats;
        if s.families.is_empty() {
            return bad("stats.families must not be empty".into());
        }
        if !(s.significance > 0.0 && s.significance < 1.0) {
            return bad(format!(
                "stats.significance must lie in (0, 1), got {}",
                s.significance
            ));
        }
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[input]
path = "data.csv"
dt = 0.01
"#;

    #[test]
    fn defaults_fill_missing_blocks() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.model.rank, RankPolicy::Manual(15));
        assert_eq!(cfg.model.lambda, 1e-2);
        assert_eq!(cfg.cluster.k, AutoOr::Auto);
        assert_eq!(cfg.forecast.histogram_instants, vec![100, 1000, 2000]);
        assert_eq!(cfg.stats.families.len(), 9);
    }

    #[test]
    fn unknown_key_is_named() {
        let err =
            PipelineConfig::from_toml(&format!("{MINIMAL}\n[model]\nlamda = 0.1\n")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn value_forms() {
        let cfg = PipelineConfig::from_toml(&format!(
            "{MINIMAL}\n[model]\nrank = \"energy:0.9\"\n[cluster]\nk = 3\n[embedding]\ntau = 4\ndim = \"auto\"\n[stats]\nfamilies = [\"GEV\", \"StudentT\"]\n"
        ))
        .unwrap();
        assert_eq!(cfg.model.rank, RankPolicy::Energy(0.9));
        assert_eq!(cfg.cluster.k_choice(), KChoice::Fixed(3));
        assert_eq!(cfg.embedding.tau, AutoOr::Value(4));
        assert_eq!(cfg.embedding.dim, AutoOr::Auto);
        assert_eq!(cfg.stats.families, vec![Family::Gev, Family::StudentT]);
        let again = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn invalid_values() {
        for extra in [
            "[model]\nrank = 1",
            "[cluster]\nenergy_target = 0.0",
            "[forecast]\nsplit = 1.5",
            "[stats]\nfamilies = []",
            "[model]\nrank = \"bogus\"",
        ] {
            let r = PipelineConfig::from_toml(&format!("{MINIMAL}\n{extra}\n"));
            assert!(matches!(r, Err(Error::Config(_))), "{extra}: {r:?}");
        }
        assert!(matches!(
            PipelineConfig::from_toml("seed = 1"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn generated_input() {
        let cfg = PipelineConfig::from_toml(
            "[[input.generate]]\nid = \"s\"\ndt = 0.01\nn_samples = 100\ngenerator = { kind = \"sine\", frequency = 1.0 }\n",
        )
        .unwrap();
        assert_eq!(cfg.input.generate.len(), 1);
    }
}
