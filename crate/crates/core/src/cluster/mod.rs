//! Compressed-feature clustering: ten summary features per sequence, POD
//! compression of the standardized feature matrix, k-means++ and
//! silhouette-based choice of K.

mod features;
mod kmeans;
mod pod;
mod silhouette;

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use features::{extract_features, FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
pub use kmeans::{kmeans_pp, ClusterResult, DEFAULT_MAX_ITER};
pub use pod::{compress, energy_rank, standardize_columns, Compression};
pub use silhouette::{select_cluster_count, silhouette, CountSelection};

use crate::error::{Error, Result};
use crate::signal::Dataset;

pub const DEFAULT_ENERGY_TARGET: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Fixed(usize),
    Auto { min: usize, max: usize },
}

impl KChoice {
    /// `auto` with range 2..=30.
    pub fn auto() -> Self {
        KChoice::Auto { min: 2, max: 30 }
    }
}

impl FromStr for KChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KChoice::auto());
        }
        s.parse::<usize>().map(KChoice::Fixed).map_err(|_| {
            Error::Parameter(format!("K must be a positive integer or `auto`, got `{s}`"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfcOptions {
    pub k: KChoice,
    pub energy_target: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for CfcOptions {
    fn default() -> Self {
        Self {
            k: KChoice::auto(),
            energy_target: DEFAULT_ENERGY_TARGET,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfcResult {
    pub ids: Vec<String>,
    pub features: Vec<FeatureVector>,
    /// Absent when there is a single sequence.
    pub compression: Option<Compression>,
    pub clusters: ClusterResult,
    /// Present when K was chosen automatically over a nontrivial range.
    pub selection: Option<CountSelection>,
    /// Normalized silhouette of the final clustering, when K ≥ 2.
    pub silhouette: Option<f64>,
}

impl CfcResult {
    pub fn k(&self) -> usize {
        self.clusters.k()
    }

    /// Sequence id → cluster index in 1..=K.
    pub fn assignment(&self) -> BTreeMap<String, usize> {
        self.ids
            .iter()
            .zip(&self.clusters.labels)
            .map(|(id, &l)| (id.clone(), l + 1))
            .collect()
    }

    /// Member ids of each cluster, in input order.
    pub fn members(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.k()];
        for (id, &l) in self.ids.iter().zip(&self.clusters.labels) {
            out[l].push(id.clone());
        }
        out
    }
}

/// Cluster the sequences of `dataset`.
///
/// With `KChoice::Auto` the range is clipped to `2..=n−1`; two or fewer
/// sequences give a single cluster.
pub fn cfc(dataset: &Dataset, opts: &CfcOptions) -> Result<CfcResult> {
    let seqs = dataset.sequences();
    let n = seqs.len();
    if n == 0 {
        return Err(Error::InsufficientData("dataset has no sequences".into()));
    }
    let features = seqs
        .par_iter()
        .map(extract_features)
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = seqs.iter().map(|s| s.id().to_string()).collect();

    if n == 1 {
        if let KChoice::Fixed(k) = opts.k {
            if k != 1 {
                return Err(Error::Parameter(format!(
                    "K = {k} exceeds the single sequence"
                )));
            }
        }
        let clusters = kmeans_pp(&[features[0].f.to_vec()], 1, opts.max_iter, opts.seed)?;
        return Ok(CfcResult {
            ids,
            features,
            compression: None,
            clusters,
            selection: None,
            silhouette: None,
        });
    }

    let compression = compress(&features, opts.energy_target)?;
    let points = compression.points();
    let (k, selection) = match opts.k {
        KChoice::Fixed(k) => (k, None),
        KChoice::Auto { .. } if n <= 2 => (1, None),
        KChoice::Auto { min, max } => {
            let lo = min.max(2);
            let hi = max.min(n - 1);
            if lo > hi {
                return Err(Error::Parameter(format!(
                    "cluster range {min}..={max} is empty for {n} sequences"
                )));
            }
            let sel = select_cluster_count(&points, lo, hi, opts.max_iter, opts.seed)?;
            (sel.k, Some(sel))
        }
    };
    let clusters = kmeans_pp(&points, k, opts.max_iter, opts.seed)?;
    let silhouette = if k >= 2 {
        Some(silhouette(&points, &clusters)?)
    } else {
        None
    };
    Ok(CfcResult {
        ids,
        features,
        compression: Some(compression),
        clusters,
        selection,
        silhouette,
    })
}

#[cfg(test)]
mod tests {
    use super::kmeans::tests::agreement;
    use super::*;
    use crate::signal::Sequence;
    use crate::synthetic::{generate, three_family_corpus};

    fn corpus() -> (Dataset, Vec<usize>) {
        let specs = three_family_corpus(10, 0.01, 4000);
        let truth = (0..30).map(|i| i / 10).collect();
        let seqs = specs.iter().map(|s| generate(s).unwrap()).collect();
        (Dataset::new(seqs).unwrap(), truth)
    }

    #[test]
    fn single_sequence() {
        let s = Sequence::from_values(
            "only",
            (0..200).map(|i| (i as f64 * 0.1).sin()).collect(),
            0.1,
        )
        .unwrap();
        let r = cfc(
            &Dataset::new(vec![s]).unwrap(),
            &CfcOptions {
                k: KChoice::Fixed(1),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.k(), 1);
        assert_eq!(r.assignment()["only"], 1);
    }

    #[test]
    fn corpus_fixed_k() {
        let (ds, truth) = corpus();
        let r = cfc(
            &ds,
            &CfcOptions {
                k: KChoice::Fixed(3),
                seed: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(agreement(&r.clusters.labels, &truth, 3), 1.0);
        assert_eq!(
            r.members().iter().map(Vec::len).collect::<Vec<_>>(),
            vec![10, 10, 10]
        );
    }

    #[test]
    fn corpus_auto_k() {
        let (ds, truth) = corpus();
        let r = cfc(
            &ds,
            &CfcOptions {
                seed: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.k(), 3, "{:?}", r.selection);
        assert_eq!(agreement(&r.clusters.labels, &truth, 3), 1.0);
    }

    #[test]
    fn k_choice_parsing() {
        assert_eq!("auto".parse::<KChoice>().unwrap(), KChoice::auto());
        assert_eq!("4".parse::<KChoice>().unwrap(), KChoice::Fixed(4));
        assert!("x".parse::<KChoice>().is_err());
    }
}
