use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use havok_core::cluster::{cfc, CfcOptions};
use havok_core::config::{AutoOr, PipelineConfig};
use havok_core::embedding::{select_delay, select_dimension, EmbeddingConfig, FnnOptions};
use havok_core::forecast::{forcing_active, project_coordinates, simulate, Forcing, ForcingMode};
use havok_core::havok::{fit_havok, FitOptions, HavokModel, RankPolicy};
use havok_core::output::{fmt_f64, sanitize_id, write_csv, write_json};
use havok_core::pipeline::{load_input, run_pipeline, write_stats_table};
use havok_core::signal::{
    mean_std, write_dataset_long, write_dataset_wide, CsvLayout, Dataset, Sequence,
};
use havok_core::stats::{best_fit, shift_positive, Family};
use havok_core::synthetic::{generate, three_family_corpus, Generator, GeneratorSpec};
use havok_core::{Error, ErrorClass, Result};

/// Cluster, embed and model nonlinear scalar time series.
#[derive(Parser)]
#[command(name = "havok", version)]
struct Cli {
    /// Pipeline configuration (TOML). Subcommands take their defaults from it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic sequences as CSV.
    Generate(GenerateArgs),
    /// Cluster sequences on compressed features.
    Cluster(ClusterArgs),
    /// Select delay and embedding dimension per sequence.
    Embed(EmbedArgs),
    /// Fit a forced linear model per sequence.
    Fit(FitArgs),
    /// Run a fitted model forward on data.
    Forecast(ForecastArgs),
    /// Fit distribution families and run K-S tests.
    Stats(StatsArgs),
    /// Run every stage as configured by --config.
    Pipeline,
}

#[derive(Args)]
struct InputArgs {
    /// Dataset CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_parser = parse_layout)]
    layout: Option<CsvLayout>,
    /// Sample interval, when the CSV has no time column.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Three-family test corpus with this many sequences per family.
    #[arg(long, conflicts_with = "lorenz")]
    corpus: Option<usize>,
    /// One Lorenz x-coordinate sequence.
    #[arg(long)]
    lorenz: bool,
    #[arg(long, default_value_t = 4000)]
    samples: usize,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, value_parser = parse_layout, default_value = "long")]
    layout: CsvLayout,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Cluster count or `auto`.
    #[arg(long)]
    k: Option<AutoOr>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    energy_target: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Delay, or `auto` for the first AMI minimum.
    #[arg(long)]
    tau: Option<AutoOr>,
    #[arg(long)]
    tau_max: Option<usize>,
    #[arg(long)]
    d_max: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    r_tol: Option<f64>,
    #[arg(long)]
    a_tol: Option<f64>,
    #[arg(long)]
    drop_threshold: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Fit only this sequence.
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    tau: Option<AutoOr>,
    #[arg(long)]
    dim: Option<AutoOr>,
    /// Integer, `hard-threshold` or `energy:<fraction>`.
    #[arg(long)]
    rank: Option<RankPolicy>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Training fraction; the rest is left for `forecast`.
    #[arg(long)]
    split: Option<f64>,
}

#[derive(Args)]
struct ForecastArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Model file written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// First sample of the forecast window (default: the model's split).
    #[arg(long)]
    start: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// measured, zero or held.
    #[arg(long)]
    forcing: Option<ForcingMode>,
    #[arg(long)]
    forcing_threshold: Option<f64>,
    #[arg(long)]
    merge_window: Option<usize>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-separated family names (default: all nine).
    #[arg(long, value_delimiter = ',')]
    families: Vec<Family>,
    #[arg(long)]
    significance: Option<f64>,
    /// Fit the raw samples instead of shifting them to a zero minimum.
    #[arg(long)]
    no_shift: bool,
}

/// A fitted model plus the standardization it was fitted under.
#[derive(Debug, Serialize, Deserialize)]
struct SavedModel {
    id: String,
    mean: f64,
    std: f64,
    /// First sample not used for training.
    split: usize,
    model: HavokModel,
}

fn parse_layout(s: &str) -> std::result::Result<CsvLayout, String> {
    match s.to_ascii_lowercase().as_str() {
        "wide" => Ok(CsvLayout::Wide),
        "long" => Ok(CsvLayout::Long),
        _ => Err(format!("layout must be `wide` or `long`, got `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("havok: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Generate(a) => cmd_generate(&cfg, &a, &out),
        Command::Cluster(a) => cmd_cluster(&mut cfg, &a, &out),
        Command::Embed(a) => cmd_embed(&mut cfg, &a, &out),
        Command::Fit(a) => cmd_fit(&mut cfg, &a, &out),
        Command::Forecast(a) => cmd_forecast(&mut cfg, &a, &out),
        Command::Stats(a) => cmd_stats(&mut cfg, &a, &out),
        Command::Pipeline => {
            if cli.config.is_none() {
                return Err(Error::Config("`pipeline` needs --config".into()));
            }
            let report = run_pipeline(&cfg)?;
            let c = &report.counts;
            println!(
                "{} sequences, {} clusters, {} models, {} forecasts, {} stats tables -> {}",
                c.sequences,
                c.clusters,
                c.models,
                c.forecasts,
                c.stats_tables,
                report.output_dir.display()
            );
            Ok(())
        }
    }
}

fn load(cfg: &mut PipelineConfig, input: &InputArgs) -> Result<Dataset> {
    if let Some(p) = &input.input {
        cfg.input.path = Some(p.clone());
        cfg.input.generate.clear();
    }
    if let Some(l) = input.layout {
        cfg.input.layout = l;
    } else if let Some(p) = &input.input {
        // Files written by `generate` and `fit` are long; detect them by header.
        let header = std::fs::read_to_string(p)
            .ok()
            .and_then(|t| t.lines().next().map(str::to_owned));
        if header.is_some_and(|h| h.split(',').map(str::trim).eq(["id", "t", "value"])) {
            cfg.input.layout = CsvLayout::Long;
        }
    }
    if input.dt.is_some() {
        cfg.input.dt = input.dt;
    }
    if cfg.input.path.is_none() && cfg.input.generate.is_empty() {
        return Err(Error::Config(
            "no input: pass --input or a config with an [input] block".into(),
        ));
    }
    load_input(cfg)
}

fn cmd_generate(cfg: &PipelineConfig, a: &GenerateArgs, out: &Path) -> Result<()> {
    let specs: Vec<GeneratorSpec> = if let Some(per) = a.corpus {
        three_family_corpus(per, a.dt, a.samples)
    } else if a.lorenz {
        vec![GeneratorSpec::new(
            "lorenz",
            a.dt,
            a.samples,
            Generator::lorenz(),
        )]
    } else if !cfg.input.generate.is_empty() {
        cfg.input.generate.clone()
    } else {
        return Err(Error::Config(
            "nothing to generate: pass --corpus, --lorenz or a config with [[input.generate]]"
                .into(),
        ));
    };
    let seqs = specs
        .iter()
        .map(generate)
        .collect::<Result<Vec<Sequence>>>()?;
    let dataset = Dataset::new(seqs)?;
    let path = out.join("sequences.csv");
    match a.layout {
        CsvLayout::Wide => write_dataset_wide(&dataset, &path)?,
        CsvLayout::Long => write_dataset_long(&dataset, &path)?,
    }
    println!("{} sequences -> {}", dataset.len(), path.display());
    Ok(())
}

fn cmd_cluster(cfg: &mut PipelineConfig, a: &ClusterArgs, out: &Path) -> Result<()> {
    let dataset = load(cfg, &a.input)?;
    let c = &mut cfg.cluster;
    if let Some(k) = a.k {
        c.k = k;
    }
    c.k_min = a.k_min.unwrap_or(c.k_min);
    c.k_max = a.k_max.unwrap_or(c.k_max);
    c.energy_target = a.energy_target.unwrap_or(c.energy_target);
    c.max_iter = a.max_iter.unwrap_or(c.max_iter);
    let r = cfc(
        &dataset,
        &CfcOptions {
            k: c.k_choice(),
            energy_target: c.energy_target,
            max_iter: c.max_iter,
            seed: cfg.seed,
        },
    )?;
    let mut header = vec!["id", "cluster"];
    header.extend(havok_core::cluster::FEATURE_NAMES);
    write_csv(
        &out.join("features.csv"),
        &header,
        r.features.iter().zip(&r.clusters.labels).map(|(f, &l)| {
            let mut row = vec![f.id.clone(), (l + 1).to_string()];
            row.extend(f.f.iter().map(|&v| fmt_f64(v)));
            row
        }),
    )?;
    write_json(
        &out.join("clusters.json"),
        &serde_json::json!({
            "k": r.k(),
            "assignment": r.assignment(),
            "members": r.members(),
            "centroids": r.clusters.centroids,
            "inertia": r.clusters.inertia,
            "iterations": r.clusters.iterations,
            "converged": r.clusters.converged,
            "silhouette": r.silhouette,
            "silhouette_scores": r.selection.as_ref().map(|s| s.scores.clone()),
        }),
    )?;
    println!(
        "{} sequences in {} clusters -> {}",
        dataset.len(),
        r.k(),
        out.display()
    );
    Ok(())
}

/// Z-scored copy of `x` with the statistics of `x[..split]`.
fn standardize_with_train(s: &Sequence, split: usize) -> Result<(Vec<f64>, f64, f64)> {
    let (mean, std) = mean_std(&s.values()[..split]);
    if std == 0.0 {
        return Err(Error::DegenerateSignal(format!(
            "sequence `{}` has a constant training segment",
            s.id()
        )));
    }
    Ok((
        s.values().iter().map(|v| (v - mean) / std).collect(),
        mean,
        std,
    ))
}

fn cmd_embed(cfg: &mut PipelineConfig, a: &EmbedArgs, out: &Path) -> Result<()> {
    let dataset = load(cfg, &a.input)?;
    let e = &mut cfg.embedding;
    if let Some(t) = a.tau {
        e.tau = t;
    }
    e.tau_max = a.tau_max.unwrap_or(e.tau_max);
    e.d_max = a.d_max.unwrap_or(e.d_max);
    e.bins = a.bins.unwrap_or(e.bins);
    e.r_tol = a.r_tol.unwrap_or(e.r_tol);
    e.a_tol = a.a_tol.unwrap_or(e.a_tol);
    e.drop_threshold = a.drop_threshold.unwrap_or(e.drop_threshold);
    let opts = FnnOptions {
        r_tol: e.r_tol,
        a_tol: e.a_tol,
    };
    let mut rows = Vec::new();
    for s in dataset.sequences() {
        let (z, _, _) = standardize_with_train(s, s.len())?;
        let (tau, ami) = match e.tau {
            AutoOr::Value(t) => (t, None),
            AutoOr::Auto => {
                let sel = select_delay(&z, e.tau_max, e.bins)?;
                (sel.tau, Some(sel))
            }
        };
        let dim = select_dimension(&z, tau, e.d_max, e.drop_threshold, opts)?;
        rows.push(serde_json::json!({
            "id": s.id(),
            "tau": tau,
            "dim": dim.dim,
            "ami_curve": ami.as_ref().map(|d| &d.curve),
            "no_local_minimum": ami.as_ref().map(|d| d.no_local_minimum),
            "fnn_curve": dim.curve,
            "no_drop": dim.no_drop,
            "rise_index": dim.rise_index,
        }));
    }
    write_json(&out.join("embedding.json"), &rows)?;
    println!(
        "embedding parameters for {} sequences -> {}",
        rows.len(),
        out.display()
    );
    Ok(())
}

fn cmd_fit(cfg: &mut PipelineConfig, a: &FitArgs, out: &Path) -> Result<()> {
    let dataset = load(cfg, &a.input)?;
    let m = &mut cfg.model;
    m.rank = a.rank.unwrap_or(m.rank);
    m.lambda = a.lambda.unwrap_or(m.lambda);
    m.eps = a.eps.unwrap_or(m.eps);
    let opts = FitOptions {
        rank: m.rank,
        lambda: m.lambda,
        eps: m.eps,
    };
    let e = &cfg.embedding;
    let tau_choice = a.tau.unwrap_or(e.tau);
    let dim_choice = a.dim.unwrap_or(e.dim);
    let fraction = a.split.unwrap_or(cfg.forecast.split);
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "--split must lie in (0, 1], got {fraction}"
        )));
    }
    let selected: Vec<&Sequence> = dataset
        .sequences()
        .iter()
        .filter(|s| a.id.as_deref().is_none_or(|id| s.id() == id))
        .collect();
    if selected.is_empty() {
        return Err(Error::Config(format!(
            "no sequence with id `{}`",
            a.id.as_deref().unwrap_or("")
        )));
    }
    for s in selected {
        let split = ((fraction * s.len() as f64).floor() as usize).clamp(2, s.len());
        let (z, mean, std) = standardize_with_train(s, split)?;
        let train = &z[..split];
        let tau = match tau_choice {
            AutoOr::Value(t) => t,
            AutoOr::Auto => select_delay(train, e.tau_max, e.bins)?.tau,
        };
        let dim = match dim_choice {
            AutoOr::Value(d) => d,
            AutoOr::Auto => {
                let fnn = FnnOptions {
                    r_tol: e.r_tol,
                    a_tol: e.a_tol,
                };
                select_dimension(train, tau, e.d_max, e.drop_threshold, fnn)?.dim
            }
        };
        let fit = fit_havok(train, s.dt(), EmbeddingConfig::new(tau, dim)?, opts)?;
        let file = sanitize_id(s.id());
        let forcing = fit.forcing();
        let forcing_seq = Sequence::from_values(s.id(), forcing, s.dt())?;
        write_dataset_long(
            &Dataset::new(vec![forcing_seq])?,
            out.join(format!("forcing/{file}.csv")),
        )?;
        let saved = SavedModel {
            id: s.id().to_string(),
            mean,
            std,
            split,
            model: fit.model,
        };
        let path = out.join(format!("models/{file}.json"));
        write_json(&path, &saved)?;
        println!(
            "{}: tau = {tau}, dim = {dim}, r = {}, residual = {:.3e} -> {}",
            s.id(),
            saved.model.r,
            fit.residual,
            path.display()
        );
    }
    Ok(())
}

fn cmd_forecast(cfg: &mut PipelineConfig, a: &ForecastArgs, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(&a.model).map_err(|e| Error::Io {
        path: a.model.clone(),
        source: e,
    })?;
    let saved: SavedModel = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", a.model.display())))?;
    let dataset = load(cfg, &a.input)?;
    let s = dataset
        .get(&saved.id)
        .ok_or_else(|| Error::Schema(format!("input has no sequence `{}`", saved.id)))?;
    let f = &mut cfg.forecast;
    f.horizon = a.horizon.unwrap_or(f.horizon);
    f.forcing = a.forcing.unwrap_or(f.forcing);
    f.forcing_threshold = a.forcing_threshold.unwrap_or(f.forcing_threshold);
    f.merge_window = a.merge_window.unwrap_or(f.merge_window);
    let start = a.start.unwrap_or(saved.split);
    if start >= s.len() {
        return Err(Error::Bounds(format!(
            "start {start} is past the end of `{}`",
            saved.id
        )));
    }
    let z: Vec<f64> = s.values()[start..]
        .iter()
        .map(|v| (v - saved.mean) / saved.std)
        .collect();
    let model = &saved.model;
    let v = project_coordinates(model, &z)?;
    let steps = f.horizon.min(v.nrows());
    let v0: Vec<f64> = (0..model.linear_dim()).map(|j| v[(0, j)]).collect();
    let measured: Vec<f64> = v.column(model.r - 1).iter().copied().collect();
    let forcing = match f.forcing {
        ForcingMode::Measured => Forcing::Measured(&measured),
        ForcingMode::Zero => Forcing::Zero,
        ForcingMode::Held => Forcing::Held,
    };
    let result = simulate(model, &v0, forcing, steps)?;
    let file = sanitize_id(&saved.id);
    write_csv(
        &out.join(format!("forecast_{file}.csv")),
        &["step", "t", "truth", "prediction", "forcing"],
        (0..steps).map(|i| {
            vec![
                i.to_string(),
                fmt_f64((start + i) as f64 * s.dt()),
                fmt_f64(z[i]),
                fmt_f64(result.x_hat[i]),
                fmt_f64(result.forcing[i]),
            ]
        }),
    )?;
    let intervals = forcing_active(&measured, f.forcing_threshold, f.merge_window);
    write_csv(
        &out.join(format!("forcing_active_{file}.csv")),
        &["start", "end", "length"],
        intervals.iter().map(|iv| {
            vec![
                (start + iv.start).to_string(),
                (start + iv.end).to_string(),
                iv.len().to_string(),
            ]
        }),
    )?;
    let rmse = (z
        .iter()
        .zip(&result.x_hat)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / steps as f64)
        .sqrt();
    println!(
        "{}: {steps} steps, RMSE {rmse:.4e} (standardized units) -> {}",
        saved.id,
        out.display()
    );
    Ok(())
}

fn cmd_stats(cfg: &mut PipelineConfig, a: &StatsArgs, out: &Path) -> Result<()> {
    let dataset = load(cfg, &a.input)?;
    let families = if a.families.is_empty() {
        cfg.stats.families.clone()
    } else {
        a.families.clone()
    };
    let significance = a.significance.unwrap_or(cfg.stats.significance);
    for s in dataset.sequences() {
        let samples = if a.no_shift {
            s.values().to_vec()
        } else {
            shift_positive(s.values())
        };
        let table = best_fit(&samples, &families, significance)?;
        let path = out.join(format!("stats/{}.csv", sanitize_id(s.id())));
        write_stats_table(&path, &table)?;
        let best = table.best();
        println!(
            "{}: best {} (p = {:.3e}, {:?}) -> {}",
            s.id(),
            best.fit.family(),
            best.ks.p_value,
            best.ks.decision,
            path.display()
        );
    }
    Ok(())
}
