use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use twoman::dynamics::{evaluate_transductive, write_horizon_csv, PredictionProtocol};
use twoman::eigenmaps::{instrumental_eigenmaps, kernel_pca, TwoManifoldConfig, ViewSource};
use twoman::experiment::{ExperimentConfig, MetricReport};
use twoman::graph::{le_embed, Scaling, WeightMode};
use twoman::kernels::{median_bandwidth, KernelSpec};
use twoman::spectral_iv::Route;
use twoman::synthetic::{
    gen_linear, gen_loop_trajectory, gen_swiss_roll_pair, LinearLatentModel, LinearModelSpec,
    LoopTrajectorySpec, SwissRollSpec,
};
use twoman::Dataset;

#[derive(Parser)]
#[command(
    name = "twoman",
    version,
    about = "Two-manifold spectral embeddings, state spaces and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// One-view embedding (Laplacian Eigenmaps or kernel PCA).
    Embed(EmbedArgs),
    /// Two-view instrumental embedding of paired datasets.
    Twoman(TwomanArgs),
    /// State-space discovery and multi-step prediction on a time series.
    Dyn(DynArgs),
    /// Seed battery / noise sweep from an experiment config.
    Sweep(SweepArgs),
    /// Re-aggregate an existing metrics.csv.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    SwissRoll,
    Linear,
    Loop,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    /// Generator spec JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Samples (time steps for `loop`).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedMethod {
    Le,
    KernelPca,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "le")]
    method: EmbedMethod,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    knn: usize,
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelKind,
    /// RBF bandwidth; median heuristic when absent.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value = "paper")]
    scaling: Scaling,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TwomanArgs {
    #[arg(long)]
    x: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Two-manifold config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Use kNN graph views with this many neighbors.
    #[arg(long, conflicts_with = "kernel")]
    knn: Option<usize>,
    /// Use explicit kernel views (RBF with median bandwidth, or linear).
    #[arg(long, value_enum)]
    kernel: Option<KernelKind>,
    #[arg(long)]
    route: Option<Route>,
    #[arg(long)]
    scaling: Option<Scaling>,
    /// Seed of the data generator, recorded in the provenance.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateModel {
    Graph,
    Rbf,
    Linear,
}

#[derive(Args)]
struct DynArgs {
    /// Observation time series, one row per step.
    #[arg(long)]
    series: PathBuf,
    /// Targets aligned with the series (e.g. positions).
    #[arg(long)]
    targets: PathBuf,
    /// Prediction protocol JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 50)]
    knn: usize,
    /// Ridge penalty of readout and dynamics.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value = "svd")]
    route: Route,
    #[arg(long, default_value = "paper")]
    scaling: Scaling,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "graph,rbf,linear"
    )]
    models: Vec<StateModel>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    route: Option<Route>,
    #[arg(long)]
    scaling: Option<Scaling>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// A metrics.csv file or a directory containing one.
    #[arg(long)]
    input: PathBuf,
    /// Where to write summary.json (defaults to the input directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn gen(a: GenArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir)?;
    let out = |name: &str| a.out_dir.join(name);
    match a.kind {
        GenKind::SwissRoll => {
            let mut spec: SwissRollSpec = a
                .config
                .as_deref()
                .map(read_json)
                .transpose()?
                .unwrap_or_default();
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            if let Some(n) = a.n {
                spec.n = n;
            }
            if let Some(s) = a.noise {
                spec = spec.with_noise(s);
            }
            let (x, y, z) = gen_swiss_roll_pair(&spec)?;
            x.write_csv(out("x.csv"))?;
            y.write_csv(out("y.csv"))?;
            z.write_csv(out("z.csv"))?;
            write_json(&out("spec.json"), &spec)?;
        }
        GenKind::Linear => {
            let mut spec: LinearModelSpec = a
                .config
                .as_deref()
                .map(read_json)
                .transpose()?
                .unwrap_or_default();
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            if let Some(s) = a.noise {
                spec.noise_x = s;
                spec.noise_y = s;
            }
            let model = LinearLatentModel::random(&spec)?;
            let (x, y, z) = gen_linear(&model, a.n.unwrap_or(1000))?;
            x.write_csv(out("x.csv"))?;
            y.write_csv(out("y.csv"))?;
            z.write_csv(out("z.csv"))?;
            Dataset::new(model.m_map().clone()).write_csv(out("m_map.csv"))?;
            Dataset::new(model.n_map().clone()).write_csv(out("n_map.csv"))?;
            write_json(&out("spec.json"), &spec)?;
        }
        GenKind::Loop => {
            let mut spec: LoopTrajectorySpec = a
                .config
                .as_deref()
                .map(read_json)
                .transpose()?
                .unwrap_or_default();
            if let Some(s) = a.seed {
                spec.seed = s;
            }
            if let Some(n) = a.n {
                spec.t_len = n;
            }
            if let Some(s) = a.noise {
                spec.noise = s;
            }
            let traj = gen_loop_trajectory(&spec)?;
            traj.observations.write_csv(out("observations.csv"))?;
            traj.positions.write_csv(out("positions.csv"))?;
            write_json(&out("spec.json"), &spec)?;
        }
    }
    log::info!("wrote dataset to {}", a.out_dir.display());
    Ok(())
}

fn kernel_spec(kind: KernelKind, gamma: Option<f64>, x: &Dataset) -> Result<KernelSpec> {
    Ok(match kind {
        KernelKind::Linear => KernelSpec::Linear,
        KernelKind::Rbf => KernelSpec::Rbf {
            gamma: gamma.map_or_else(|| median_bandwidth(x), Ok)?,
        },
    })
}

fn embed(a: EmbedArgs) -> Result<()> {
    let x = read_dataset(&a.input)?;
    let (emb, method) = match a.method {
        EmbedMethod::Le => (
            le_embed(&x, a.knn, WeightMode::Binary, a.k, a.scaling)?,
            "le",
        ),
        EmbedMethod::KernelPca => (
            kernel_pca(&x, kernel_spec(a.kernel, a.gamma, &x)?, a.k)?,
            "kernel_pca",
        ),
    };
    std::fs::create_dir_all(&a.out_dir)?;
    let names = (1..=a.k).map(|j| format!("e{j}")).collect();
    Dataset::with_columns(emb.coords, names)?.write_csv(a.out_dir.join("coords.csv"))?;
    let meta = serde_json::json!({
        "method": method,
        "spectrum": emb.spectrum,
        "dropped": emb.dropped.is_finite().then_some(emb.dropped),
        "input_hash": x.content_hash(),
    });
    write_json(&a.out_dir.join("embedding.json"), &meta)
}

fn twoman_cmd(a: TwomanArgs) -> Result<()> {
    let (x, y) = (read_dataset(&a.x)?, read_dataset(&a.y)?);
    let mut cfg: TwoManifoldConfig = match a.config.as_deref() {
        Some(p) => read_json(p)?,
        None => TwoManifoldConfig::graphs(10, 2),
    };
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(k_nn) = a.knn {
        let g = ViewSource::Graph {
            k_nn,
            weight: WeightMode::Binary,
        };
        (cfg.view_x, cfg.view_y) = (g, g);
    }
    match a.kernel {
        Some(KernelKind::Rbf) => {
            (cfg.view_x, cfg.view_y) = (ViewSource::RbfMedian, ViewSource::RbfMedian)
        }
        Some(KernelKind::Linear) => {
            let v = ViewSource::Kernel {
                kernel: KernelSpec::Linear,
            };
            (cfg.view_x, cfg.view_y) = (v, v);
        }
        None => {}
    }
    if let Some(r) = a.route {
        cfg.route = r;
    }
    if let Some(s) = a.scaling {
        cfg.scaling = s;
    }
    let mut result = instrumental_eigenmaps(&x, &y, &cfg)?;
    result.provenance.data_seed = a.seed;
    result.write(&a.out_dir)?;
    result
        .decomposition
        .write_bundle(a.out_dir.join("decomposition"))?;
    log::info!("spectrum {:?}", result.spectrum);
    Ok(())
}

fn dyn_cmd(a: DynArgs) -> Result<()> {
    let series = read_dataset(&a.series)?;
    let targets = read_dataset(&a.targets)?;
    let mut protocol: PredictionProtocol = a
        .config
        .as_deref()
        .map(read_json)
        .transpose()?
        .unwrap_or_default();
    if let Some(k) = a.k {
        protocol.k = k;
    }
    if let Some(eta) = a.eta {
        protocol.ridge_lambda = eta;
    }
    let mut curves = Vec::new();
    for model in &a.models {
        let (name, source) = match model {
            StateModel::Graph => (
                "graph",
                ViewSource::Graph {
                    k_nn: a.knn,
                    weight: WeightMode::Binary,
                },
            ),
            StateModel::Rbf => ("rbf", ViewSource::RbfMedian),
            StateModel::Linear => (
                "linear",
                ViewSource::Kernel {
                    kernel: KernelSpec::Linear,
                },
            ),
        };
        let cfg = TwoManifoldConfig {
            route: a.route,
            scaling: a.scaling,
            ..TwoManifoldConfig::new(source, source, protocol.k)
        };
        let curve = evaluate_transductive(&series, &targets, &cfg, &protocol)
            .with_context(|| format!("model {name}"))?;
        println!(
            "{name}: mean RMSE {:.4} over {} horizons",
            curve.iter().sum::<f64>() / curve.len() as f64,
            curve.len()
        );
        curves.push((name.to_string(), curve));
    }
    std::fs::create_dir_all(&a.out_dir)?;
    write_horizon_csv(a.out_dir.join("horizon_rmse.csv"), &curves)?;
    write_json(&a.out_dir.join("protocol.json"), &protocol)
}

fn print_report(report: &MetricReport) {
    for a in &report.aggregates {
        println!(
            "{:<18} {:<28} mean {:.4} std {:.4} (n={})",
            a.method, a.metric, a.mean, a.std, a.count
        );
    }
    for w in &report.win_rates {
        println!(
            "{} vs {} on {}: win-rate {:.2} ({}/{})",
            w.method, w.baseline, w.metric, w.rate, w.wins, w.seeds
        );
    }
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    let e = &mut cfg.embedding;
    if let Some(k) = a.k {
        e.k = k;
    }
    if let Some(k_nn) = a.knn {
        e.k_nn = k_nn;
    }
    if let Some(eta) = a.eta {
        e.eta = eta;
    }
    if let Some(r) = a.route {
        e.route = r;
    }
    if let Some(s) = a.scaling {
        e.scaling = s;
    }
    if let Some(d) = a.out_dir {
        cfg.out_dir = Some(d);
    }
    if cfg.out_dir.is_none() {
        bail!("an output directory is required (--out-dir or out_dir in the config)");
    }
    let report = twoman::experiment::run_experiment(&cfg)?;
    print_report(&report);
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let (csv_path, dir) = if a.input.is_dir() {
        (a.input.join("metrics.csv"), a.input.clone())
    } else {
        (
            a.input.clone(),
            a.input.parent().map(Path::to_path_buf).unwrap_or_default(),
        )
    };
    let report = MetricReport::read_rows(&csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    let out = a.out_dir.unwrap_or(dir);
    report.write(&out)?;
    print_report(&report);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Gen(a) => gen(a),
        Command::Embed(a) => embed(a),
        Command::Twoman(a) => twoman_cmd(a),
        Command::Dyn(a) => dyn_cmd(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
    }
}
