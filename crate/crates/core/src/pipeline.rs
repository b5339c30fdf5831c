//! End-to-end run: load → cluster → embedding parameters → fit → forecast
//! → forcing statistics, with every artifact listed in `manifest.json`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{cfc, CfcOptions, CfcResult, FEATURE_NAMES};
use crate::config::{AutoOr, PipelineConfig};
use crate::embedding::{
    ami_curve, delay_from_curve, dimension_from_curve, fnn_curve, DelaySelection,
    DimensionSelection, EmbeddingConfig, FnnOptions,
};
use crate::error::{Error, Result};
use crate::forecast::{
    error_evolution, forcing_active, project_coordinates, simulate, Forcing, ForcingMode, Interval,
};
use crate::havok::{fit_havok, FitOptions, HavokFit};
use crate::output::{
    fmt_f64, sanitize_id, write_bytes, write_csv, write_json, ArtifactEntry, ArtifactLog,
};
use crate::signal::{load_dataset, mean_std, write_dataset_long, Dataset};
use crate::stats::{best_fit, shift_positive, BestFit};
use crate::synthetic::generate;

pub const MANIFEST: &str = "manifest.json";
/// Left in the output directory when a run fails.
pub const PARTIAL_MARKER: &str = ".partial";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub sequences: usize,
    pub clusters: usize,
    pub models: usize,
    pub forecasts: usize,
    pub stats_tables: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub output_dir: PathBuf,
    pub counts: Counts,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    /// Resolved configuration; `output_dir` is omitted so that the
    /// manifest does not depend on where the run was written.
    config: toml::Table,
    counts: Counts,
    artifacts: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    path: String,
    stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequence: Option<String>,
}

/// Run every stage. On failure the artifacts written so far are kept and a
/// `.partial` marker records the error and the files written.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    prepare_output_dir(&out)?;
    let mut log = ArtifactLog::new(&out);
    match run_stages(cfg, &mut log) {
        Ok(counts) => Ok(PipelineReport {
            output_dir: out,
            counts,
            artifacts: log.entries().to_vec(),
        }),
        Err(e) => {
            let mut text = format!("error: {e}\n");
            for entry in log.entries() {
                text.push_str(&entry.path);
                text.push('\n');
            }
            // Best effort: the original error matters more than the marker.
            let _ = write_bytes(&out.join(PARTIAL_MARKER), text.as_bytes());
            Err(e)
        }
    }
}

/// Create `dir`, or clear the artifacts of an earlier run in it. Files not
/// written by an earlier run are left alone and make the run fail.
fn prepare_output_dir(dir: &Path) -> Result<()> {
    if !dir.exists() {
        return fs::create_dir_all(dir).map_err(|e| Error::io(dir, e));
    }
    let mut owned: Vec<String> = Vec::new();
    let manifest = dir.join(MANIFEST);
    if manifest.is_file() {
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
            owned.extend(m.artifacts.into_iter().map(|a| a.path));
        }
    }
    let partial = dir.join(PARTIAL_MARKER);
    if partial.is_file() {
        let text = fs::read_to_string(&partial).map_err(|e| Error::io(&partial, e))?;
        owned.extend(text.lines().skip(1).map(str::to_string));
        owned.push(PARTIAL_MARKER.into());
    }
    for rel in &owned {
        let p = dir.join(rel);
        if p.is_file() {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    let leftover = remove_empty_dirs(dir)?;
    if let Some(file) = leftover {
        return Err(Error::Config(format!(
            "output directory {} holds files from elsewhere (e.g. {}); choose an empty directory",
            dir.display(),
            file.display()
        )));
    }
    Ok(())
}

/// Remove empty subdirectories; return some remaining file, if any.
fn remove_empty_dirs(dir: &Path) -> Result<Option<PathBuf>> {
    let mut found = None;
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            match remove_empty_dirs(&p)? {
                Some(f) => found = found.or(Some(f)),
                None => {
                    let _ = fs::remove_dir(&p);
                }
            }
        } else {
            found = found.or(Some(p));
        }
    }
    Ok(found)
}

/// Training and test segments of one sequence, both standardized with the
/// training mean and standard deviation.
struct Prepared {
    id: String,
    file: String,
    cluster: usize,
    split: usize,
    dt: f64,
    train: Vec<f64>,
    test: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct SequenceEmbedding {
    id: String,
    cluster: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    ami_curve: Option<Vec<f64>>,
    /// At the cluster's delay.
    #[serde(skip_serializing_if = "Option::is_none")]
    fnn_curve: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct ClusterEmbedding {
    cluster: usize,
    tau: usize,
    dim: usize,
    members: Vec<String>,
    /// Selection on the member-averaged AMI curve.
    #[serde(skip_serializing_if = "Option::is_none")]
    ami: Option<DelaySelection>,
    /// Selection on the member-averaged FNN curve.
    #[serde(skip_serializing_if = "Option::is_none")]
    fnn: Option<DimensionSelection>,
}

#[derive(Debug, Serialize)]
struct ClusterArtifact<'a> {
    k: usize,
    assignment: BTreeMap<String, usize>,
    members: Vec<Vec<String>>,
    centroids: &'a [Vec<f64>],
    inertia: f64,
    iterations: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    silhouette: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    silhouette_scores: Option<BTreeMap<usize, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    compression: Option<CompressionArtifact<'a>>,
}

#[derive(Debug, Serialize)]
struct CompressionArtifact<'a> {
    rank: usize,
    eigenvalues: &'a [f64],
    cumulative_energy: &'a [f64],
    /// 10 × r_f, row-major.
    basis: Vec<Vec<f64>>,
}

fn tag<T>(stage: &'static str, id: Option<&str>, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(stage, id))
}

/// Run `f` over items in parallel, reporting the first failure in input
/// order so that errors are as deterministic as results.
fn par_stage<T: Sync, U: Send>(
    stage: &'static str,
    items: &[T],
    id: impl Fn(&T) -> &str + Sync,
    f: impl Fn(&T) -> Result<U> + Sync,
) -> Result<Vec<U>> {
    let results: Vec<Result<U>> = items.par_iter().map(&f).collect();
    results
        .into_iter()
        .zip(items)
        .map(|(r, item)| tag(stage, Some(id(item)), r))
        .collect()
}

/// Pointwise mean of equal-length curves.
fn mean_curve<'a>(curves: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for c in curves {
        if sum.is_empty() {
            sum = vec![0.0; c.len()];
        }
        for (s, v) in sum.iter_mut().zip(c) {
            *s += v;
        }
        n += 1;
    }
    sum.iter().map(|s| s / n.max(1) as f64).collect()
}

fn run_stages(cfg: &PipelineConfig, log: &mut ArtifactLog) -> Result<Counts> {
    // load
    let dataset = tag("load", None, load_input(cfg))?;
    if !cfg.input.generate.is_empty() {
        let path = log.record("data/sequences.csv", "load", None);
        tag("load", None, write_dataset_long(&dataset, &path))?;
    }
    let mut files = HashSet::new();
    for s in dataset.sequences() {
        if !files.insert(sanitize_id(s.id())) {
            return Err(Error::Schema(format!(
                "sequence ids `{}` and another collide after file-name sanitizing",
                s.id()
            ))
            .at_stage("load", Some(s.id())));
        }
    }

    // cluster
    let opts = CfcOptions {
        k: cfg.cluster.k_choice(),
        energy_target: cfg.cluster.energy_target,
        max_iter: cfg.cluster.max_iter,
        seed: cfg.seed,
    };
    let clustering = tag("cluster", None, cfc(&dataset, &opts))?;
    write_cluster_artifacts(&clustering, log)?;
    let k = clustering.k();

    // split and standardize with training statistics
    let prepared = par_stage(
        "split",
        &dataset
            .sequences()
            .iter()
            .zip(&clustering.clusters.labels)
            .collect::<Vec<_>>(),
        |(s, _)| s.id(),
        |(s, &cluster)| {
            let x = s.values();
            let split = cfg.forecast.split_point(x.len());
            if split < 2 || split + 2 > x.len() {
                return Err(Error::Bounds(format!(
                    "split index {split} leaves no room in {} samples",
                    x.len()
                )));
            }
            let (mean, std) = mean_std(&x[..split]);
            let scale = x[..split].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if std == 0.0 || std <= 1e-14 * scale {
                return Err(Error::DegenerateSignal(
                    "training segment has zero variance".into(),
                ));
            }
            let z = |v: &[f64]| v.iter().map(|x| (x - mean) / std).collect::<Vec<f64>>();
            Ok(Prepared {
                id: s.id().to_string(),
                file: sanitize_id(s.id()),
                cluster,
                split,
                dt: s.dt(),
                train: z(&x[..split]),
                test: z(&x[split..]),
            })
        },
    )?;

    // embedding parameters: AMI and FNN curves averaged over each cluster
    let emb_cfg = &cfg.embedding;
    let fnn = FnnOptions {
        r_tol: emb_cfg.r_tol,
        a_tol: emb_cfg.a_tol,
    };
    let members: Vec<Vec<usize>> = (0..k)
        .map(|c| {
            (0..prepared.len())
                .filter(|&i| prepared[i].cluster == c)
                .collect()
        })
        .collect();
    let ami_curves: Option<Vec<Vec<f64>>> = match emb_cfg.tau {
        AutoOr::Value(_) => None,
        AutoOr::Auto => Some(par_stage(
            "embed",
            &prepared,
            |p| &p.id,
            |p| ami_curve(&p.train, emb_cfg.tau_max, emb_cfg.bins),
        )?),
    };
    let cluster_tau: Vec<(usize, Option<DelaySelection>)> = (0..k)
        .map(|c| match (&ami_curves, emb_cfg.tau) {
            (Some(curves), _) => {
                let sel = delay_from_curve(mean_curve(members[c].iter().map(|&i| &curves[i])));
                (sel.tau, Some(sel))
            }
            (None, AutoOr::Value(t)) => (t, None),
            (None, AutoOr::Auto) => unreachable!(),
        })
        .collect();
    let fnn_curves: Option<Vec<Vec<f64>>> = match emb_cfg.dim {
        AutoOr::Value(_) => None,
        AutoOr::Auto => Some(par_stage(
            "embed",
            &prepared,
            |p| &p.id,
            |p| fnn_curve(&p.train, cluster_tau[p.cluster].0, emb_cfg.d_max, fnn),
        )?),
    };
    let mut cluster_embedding = Vec::with_capacity(k);
    for c in 0..k {
        let (tau, ami) = cluster_tau[c].clone();
        let (dim, fnn_sel) = match (&fnn_curves, emb_cfg.dim) {
            (Some(curves), _) => {
                let curve = mean_curve(members[c].iter().map(|&i| &curves[i]));
                let sel = tag(
                    "embed",
                    None,
                    dimension_from_curve(curve, emb_cfg.drop_threshold),
                )?;
                (sel.dim, Some(sel))
            }
            (None, AutoOr::Value(d)) => (d, None),
            (None, AutoOr::Auto) => unreachable!(),
        };
        cluster_embedding.push(ClusterEmbedding {
            cluster: c + 1,
            tau,
            dim,
            members: members[c].iter().map(|&i| prepared[i].id.clone()).collect(),
            ami,
            fnn: fnn_sel,
        });
    }
    let per_sequence: Vec<SequenceEmbedding> = prepared
        .iter()
        .enumerate()
        .map(|(i, p)| SequenceEmbedding {
            id: p.id.clone(),
            cluster: p.cluster + 1,
            ami_curve: ami_curves.as_ref().map(|c| c[i].clone()),
            fnn_curve: fnn_curves.as_ref().map(|c| c[i].clone()),
        })
        .collect();
    let path = log.record("embedding/parameters.json", "embed", None);
    write_json(
        &path,
        &serde_json::json!({ "clusters": cluster_embedding, "sequences": per_sequence }),
    )?;

    // fit
    let fit_opts = FitOptions {
        rank: cfg.model.rank,
        lambda: cfg.model.lambda,
        eps: cfg.model.eps,
    };
    let fits: Vec<HavokFit> = par_stage(
        "fit",
        &prepared,
        |p| &p.id,
        |p| {
            let ce = &cluster_embedding[p.cluster];
            fit_havok(
                &p.train,
                p.dt,
                EmbeddingConfig::new(ce.tau, ce.dim)?,
                fit_opts,
            )
        },
    )?;
    for (p, fit) in prepared.iter().zip(&fits) {
        let path = log.record(&format!("models/{}.json", p.file), "fit", Some(&p.id));
        write_json(&path, &fit.model)?;
    }

    // forecast on the held-out segment
    let forecasts = par_stage(
        "forecast",
        &prepared.iter().zip(&fits).collect::<Vec<_>>(),
        |(p, _)| &p.id,
        |(p, fit)| {
            let model = &fit.model;
            let v = project_coordinates(model, &p.test)?;
            let steps = cfg.forecast.horizon.min(v.nrows());
            if steps < 2 {
                return Err(Error::InsufficientData(format!(
                    "test segment yields {} delay vectors; at least 2 are needed",
                    v.nrows()
                )));
            }
            let v0: Vec<f64> = (0..model.linear_dim()).map(|j| v[(0, j)]).collect();
            let measured: Vec<f64> = v.column(model.r - 1).iter().copied().collect();
            let forcing = match cfg.forecast.forcing {
                ForcingMode::Measured => Forcing::Measured(&measured),
                ForcingMode::Zero => Forcing::Zero,
                ForcingMode::Held => Forcing::Held,
            };
            let result = simulate(model, &v0, forcing, steps)?;
            Ok((result, p.test[..steps].to_vec()))
        },
    )?;
    for (p, (result, truth)) in prepared.iter().zip(&forecasts) {
        let path = log.record(
            &format!("forecasts/{}.csv", p.file),
            "forecast",
            Some(&p.id),
        );
        let rows = (0..result.horizon).map(|i| {
            vec![
                i.to_string(),
                fmt_f64((p.split + i) as f64 * p.dt),
                fmt_f64(truth[i]),
                fmt_f64(result.x_hat[i]),
                fmt_f64(result.forcing[i]),
            ]
        });
        write_csv(
            &path,
            &["step", "t", "truth", "prediction", "forcing"],
            rows,
        )?;
    }
    let mut error_rows = Vec::new();
    let mut histograms = Vec::new();
    for c in 0..k {
        let members: Vec<usize> = (0..prepared.len())
            .filter(|&i| prepared[i].cluster == c)
            .collect();
        let len = members
            .iter()
            .map(|&i| forecasts[i].0.horizon)
            .min()
            .unwrap_or(0);
        let preds: Vec<Vec<f64>> = members
            .iter()
            .map(|&i| forecasts[i].0.x_hat[..len].to_vec())
            .collect();
        let truths: Vec<Vec<f64>> = members
            .iter()
            .map(|&i| forecasts[i].1[..len].to_vec())
            .collect();
        let ev = tag(
            "forecast",
            None,
            error_evolution(
                &preds,
                &truths,
                &cfg.forecast.histogram_instants,
                cfg.forecast.histogram_bins,
            ),
        )?;
        for t in 0..len {
            error_rows.push(vec![
                (c + 1).to_string(),
                t.to_string(),
                fmt_f64(ev.rmse[t]),
                fmt_f64(ev.mae[t]),
                fmt_f64(ev.vae[t]),
            ]);
        }
        histograms.push(serde_json::json!({ "cluster": c + 1, "histograms": ev.histograms }));
    }
    let path = log.record("forecasts/errors.csv", "forecast", None);
    write_csv(
        &path,
        &["cluster", "step", "rmse", "mae", "vae"],
        error_rows,
    )?;
    let path = log.record("forecasts/error_histograms.json", "forecast", None);
    write_json(&path, &histograms)?;

    // forcing statistics on the training forcing coordinate
    let pairs: Vec<(&Prepared, &HavokFit)> = prepared.iter().zip(&fits).collect();
    let stats: Vec<(Vec<Interval>, BestFit)> = par_stage(
        "stats",
        &pairs,
        |(p, _)| &p.id,
        |(_, fit)| {
            let v = fit.forcing();
            let intervals = forcing_active(
                &v,
                cfg.forecast.forcing_threshold,
                cfg.forecast.merge_window,
            );
            let table = best_fit(
                &shift_positive(&v),
                &cfg.stats.families,
                cfg.stats.significance,
            )?;
            Ok((intervals, table))
        },
    )?;
    for (p, (intervals, table)) in prepared.iter().zip(&stats) {
        let path = log.record(&format!("forcing/{}.csv", p.file), "stats", Some(&p.id));
        write_csv(
            &path,
            &["start", "end", "length"],
            intervals.iter().map(|iv| {
                vec![
                    iv.start.to_string(),
                    iv.end.to_string(),
                    iv.len().to_string(),
                ]
            }),
        )?;
        let path = log.record(&format!("stats/{}.csv", p.file), "stats", Some(&p.id));
        write_stats_table(&path, table)?;
    }

    let counts = Counts {
        sequences: prepared.len(),
        clusters: k,
        models: fits.len(),
        forecasts: forecasts.len(),
        stats_tables: stats.len(),
    };
    let path = log.record(MANIFEST, "manifest", None);
    let mut config = toml::Table::try_from(cfg)
        .map_err(|e| Error::Schema(format!("cannot record config: {e}")))?;
    config.remove("output_dir");
    let manifest = Manifest {
        seed: cfg.seed,
        config,
        counts: counts.clone(),
        artifacts: log
            .entries()
            .iter()
            .map(|e| ManifestEntry {
                path: e.path.clone(),
                stage: e.stage.clone(),
                sequence: e.sequence.clone(),
            })
            .collect(),
    };
    write_json(&path, &manifest)?;
    Ok(counts)
}

/// Dataset named by the `input` block: a CSV file or generated sequences.
pub fn load_input(cfg: &PipelineConfig) -> Result<Dataset> {
    match &cfg.input.path {
        Some(path) => load_dataset(path, &cfg.input.schema()),
        None => {
            let results: Vec<Result<_>> = cfg.input.generate.par_iter().map(generate).collect();
            Dataset::new(results.into_iter().collect::<Result<Vec<_>>>()?)
        }
    }
}

fn write_cluster_artifacts(r: &CfcResult, log: &mut ArtifactLog) -> Result<()> {
    let path = log.record("cluster/features.csv", "cluster", None);
    let mut header = vec!["id", "cluster"];
    header.extend(FEATURE_NAMES);
    write_csv(
        &path,
        &header,
        r.features.iter().zip(&r.clusters.labels).map(|(f, &l)| {
            let mut row = vec![f.id.clone(), (l + 1).to_string()];
            row.extend(f.f.iter().map(|&v| fmt_f64(v)));
            row
        }),
    )?;
    let artifact = ClusterArtifact {
        k: r.k(),
        assignment: r.assignment(),
        members: r.members(),
        centroids: &r.clusters.centroids,
        inertia: r.clusters.inertia,
        iterations: r.clusters.iterations,
        converged: r.clusters.converged,
        silhouette: r.silhouette,
        silhouette_scores: r
            .selection
            .as_ref()
            .map(|s| s.scores.iter().copied().collect()),
        compression: r.compression.as_ref().map(|c| CompressionArtifact {
            rank: c.rank,
            eigenvalues: &c.eigenvalues,
            cumulative_energy: &c.cumulative_energy,
            basis: c
                .basis
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }),
    };
    let path = log.record("cluster/clusters.json", "cluster", None);
    write_json(&path, &artifact)
}

/// One row per fitted family in rank order, then one per skipped family.
pub fn write_stats_table(path: &Path, table: &BestFit) -> Result<()> {
    let header = [
        "rank",
        "family",
        "parameters",
        "loglik",
        "ks_statistic",
        "p_value",
        "decision",
        "note",
    ];
    let mut rows = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let params = row
            .fit
            .dist
            .params()
            .iter()
            .map(|(name, v)| format!("{name}={}", fmt_f64(*v)))
            .collect::<Vec<_>>()
            .join(";");
        rows.push(vec![
            (i + 1).to_string(),
            row.fit.family().name().to_string(),
            params,
            fmt_f64(row.fit.loglik),
            fmt_f64(row.ks.statistic),
            fmt_f64(row.ks.p_value),
            format!("{:?}", row.ks.decision),
            String::new(),
        ]);
    }
    for s in &table.skipped {
        rows.push(vec![
            String::new(),
            s.family.name().to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            "Skipped".into(),
            format!("\"{}\"", s.reason.replace('"', "'")),
        ]);
    }
    write_csv(path, &header, rows)
}
