//! Seed batteries and noise sweeps over the synthetic generators, with
//! long-format CSV and JSON summary reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::{format_f64, Dataset};
use crate::dynamics::{evaluate_transductive, PredictionProtocol};
use crate::eigenmaps::{
    instrumental_eigenmaps_prepared, kernel_pca, PreparedView, TwoManifoldConfig, ViewSource,
};
use crate::error::{Error, Result};
use crate::graph::{knn_adjacency, le_embed_graph, Scaling, WeightMode};
use crate::kernels::{median_bandwidth, KernelSpec};
use crate::linalg::{sym_apply_fn, sym_eig, symmetrize, trunc_svd, Solver};
use crate::metrics::{principal_angles, procrustes_error};
use crate::spectral_iv::{cross_covariance, linear_cca, linear_rrr, two_subspace_pca, Route};
use crate::synthetic::{
    gen_linear, gen_loop_trajectory, gen_swiss_roll_pair, LinearLatentModel, LinearModelSpec,
    LoopTrajectorySpec, SwissRollSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGenerator {
    pub spec: LinearModelSpec,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    SwissRoll(SwissRollSpec),
    Linear(LinearGenerator),
    Loop(LoopTrajectorySpec),
}

impl GeneratorSpec {
    fn with_seed(&self, seed: u64) -> GeneratorSpec {
        let mut g = self.clone();
        match &mut g {
            GeneratorSpec::SwissRoll(s) => s.seed = seed,
            GeneratorSpec::Linear(l) => l.spec.seed = seed,
            GeneratorSpec::Loop(s) => s.seed = seed,
        }
        g
    }

    fn with_noise(&self, sigma: f64) -> GeneratorSpec {
        let mut g = self.clone();
        match &mut g {
            GeneratorSpec::SwissRoll(s) => *s = s.clone().with_noise(sigma),
            GeneratorSpec::Linear(l) => {
                l.spec.noise_x = sigma;
                l.spec.noise_y = sigma;
            }
            GeneratorSpec::Loop(s) => s.noise = sigma,
        }
        g
    }

    fn validate(&self) -> Result<()> {
        match self {
            GeneratorSpec::SwissRoll(s) => s.validate(),
            GeneratorSpec::Linear(l) => {
                if l.n < 2 {
                    return Err(Error::Config("linear generator needs n >= 2".into()));
                }
                LinearLatentModel::random(&l.spec).map(|_| ())
            }
            GeneratorSpec::Loop(s) => s.validate(),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::SwissRoll(_) => "swiss_roll",
            GeneratorSpec::Linear(_) => "linear",
            GeneratorSpec::Loop(_) => "loop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// Two-manifold embedding of paired rolls.
    TwoManifold,
    /// Laplacian Eigenmaps of the first view only.
    Le,
    /// RBF (median bandwidth) kernel PCA of the first view.
    KernelPca,
    /// Plain PCA of the first view.
    Pca,
    /// SVD of the cross-covariance.
    TwoSubspacePca,
    Rrr,
    Cca,
    /// State space from graph views of futures and pasts.
    GraphState,
    /// State space from RBF kernel SVD.
    RbfState,
    /// State space from linear kernels.
    LinearState,
}

impl MethodKind {
    pub fn name(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    }

    pub fn from_name(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Config(format!("unknown method {s:?}")))
    }

    /// Methods that use the second view as an instrument.
    pub fn is_two_view(self) -> bool {
        matches!(
            self,
            MethodKind::TwoManifold
                | MethodKind::TwoSubspacePca
                | MethodKind::Rrr
                | MethodKind::Cca
                | MethodKind::GraphState
        )
    }

    fn generator(self) -> &'static str {
        match self {
            MethodKind::TwoManifold | MethodKind::Le | MethodKind::KernelPca => "swiss_roll",
            MethodKind::Pca => "swiss_roll|linear",
            MethodKind::TwoSubspacePca | MethodKind::Rrr | MethodKind::Cca => "linear",
            MethodKind::GraphState | MethodKind::RbfState | MethodKind::LinearState => "loop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Procrustes error of the first-view embedding to standardized latents.
    Procrustes,
    /// Largest principal angle between the recovered subspace and `range(M)`.
    PrincipalAngle,
    /// Position RMSE per prediction horizon, plus its mean.
    HorizonRmse,
}

impl MetricKind {
    fn generator(self) -> &'static str {
        match self {
            MetricKind::Procrustes => "swiss_roll",
            MetricKind::PrincipalAngle => "linear",
            MetricKind::HorizonRmse => "loop",
        }
    }
}

fn default_k() -> usize {
    2
}

fn default_knn() -> usize {
    5
}

fn default_eta() -> f64 {
    1e-4
}

fn default_shift() -> f64 {
    crate::eigenmaps::DEFAULT_GRAPH_SHIFT
}

/// Embedding settings shared by all methods of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_knn")]
    pub k_nn: usize,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub route: Route,
    /// Ridge regularizer for RRR and CCA.
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_shift")]
    pub graph_shift: f64,
    #[serde(default)]
    pub solver: Solver,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        Self {
            k: default_k(),
            k_nn: default_knn(),
            scaling: Scaling::Paper,
            route: Route::Svd,
            eta: default_eta(),
            graph_shift: default_shift(),
            solver: Solver::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorSpec,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodKind>,
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub embedding: EmbeddingParams,
    /// Used by the state-space methods.
    #[serde(default)]
    pub protocol: PredictionProtocol,
    /// Noise levels to sweep; each replaces the generator's noise scales.
    #[serde(default)]
    pub noise_levels: Option<Vec<f64>>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(path.display().to_string()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let config = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return config("at least one seed is required".into());
        }
        if self.methods.is_empty() || self.metrics.is_empty() {
            return config("at least one method and one metric are required".into());
        }
        let gen = self.generator.name();
        for m in &self.methods {
            if !m.generator().split('|').any(|g| g == gen) {
                return config(format!(
                    "method {} does not apply to the {gen} generator",
                    m.name()
                ));
            }
        }
        for m in &self.metrics {
            if m.generator() != gen {
                return config(format!(
                    "metric {m:?} does not apply to the {gen} generator"
                ));
            }
        }
        if let Some(levels) = &self.noise_levels {
            if levels.is_empty() || levels.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return config("noise levels must be finite, non-negative and non-empty".into());
            }
        }
        if self.embedding.k == 0 || self.embedding.k_nn == 0 {
            return config("k and k_nn must be positive".into());
        }
        self.generator
            .validate()
            .map_err(|e| e.context("generator"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub seed: u64,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

/// Fraction of seeds on which a two-view method scores lower than a baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub method: String,
    pub baseline: String,
    pub metric: String,
    pub wins: usize,
    pub seeds: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStamp {
    pub seed: u64,
    pub method: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub aggregates: Vec<Aggregate>,
    pub win_rates: Vec<WinRate>,
    /// Wall-clock stamps; written to their own file so reports stay reproducible.
    #[serde(skip)]
    pub runtime: Vec<RuntimeStamp>,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    aggregates: Vec<Aggregate>,
    win_rates: Vec<WinRate>,
}

fn first_appearance<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_owned());
        }
    }
    out
}

impl MetricReport {
    /// Aggregates rows in first-appearance order of methods and metrics.
    pub fn from_rows(rows: Vec<MetricRow>) -> Self {
        let methods = first_appearance(rows.iter().map(|r| r.method.as_str()));
        let metrics = first_appearance(rows.iter().map(|r| r.metric.as_str()));
        let values = |method: &str, metric: &str| -> Vec<(u64, f64)> {
            rows.iter()
                .filter(|r| r.method == method && r.metric == metric)
                .map(|r| (r.seed, r.value))
                .collect()
        };
        let mut aggregates = Vec::new();
        for method in &methods {
            for metric in &metrics {
                let v: Vec<f64> = values(method, metric).into_iter().map(|p| p.1).collect();
                if v.is_empty() {
                    continue;
                }
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let std = if v.len() > 1 {
                    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                aggregates.push(Aggregate {
                    method: method.clone(),
                    metric: metric.clone(),
                    count: v.len(),
                    mean,
                    std,
                });
            }
        }
        let two_view = |m: &str| {
            MethodKind::from_name(m)
                .map(MethodKind::is_two_view)
                .unwrap_or(false)
        };
        let mut win_rates = Vec::new();
        for method in methods.iter().filter(|m| two_view(m)) {
            for baseline in methods.iter().filter(|m| !two_view(m)) {
                for metric in &metrics {
                    let base = values(baseline, metric);
                    let paired: Vec<(f64, f64)> = values(method, metric)
                        .into_iter()
                        .filter_map(|(seed, v)| base.iter().find(|b| b.0 == seed).map(|b| (v, b.1)))
                        .collect();
                    if paired.is_empty() {
                        continue;
                    }
                    let wins = paired.iter().filter(|(a, b)| a < b).count();
                    win_rates.push(WinRate {
                        method: method.clone(),
                        baseline: baseline.clone(),
                        metric: metric.clone(),
                        wins,
                        seeds: paired.len(),
                        rate: wins as f64 / paired.len() as f64,
                    });
                }
            }
        }
        Self {
            rows,
            aggregates,
            win_rates,
            runtime: Vec::new(),
        }
    }

    pub fn aggregate(&self, method: &str, metric: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.metric == metric)
    }

    pub fn win_rate(&self, method: &str, baseline: &str, metric: &str) -> Option<&WinRate> {
        self.win_rates
            .iter()
            .find(|w| w.method == method && w.baseline == baseline && w.metric == metric)
    }

    /// Writes `metrics.csv` (seed, method, metric, value), `summary.json`
    /// and, when stamps exist, `runtime.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut wtr = csv::Writer::from_path(dir.join("metrics.csv"))?;
        wtr.write_record(["seed", "method", "metric", "value"])?;
        for r in &self.rows {
            wtr.write_record([
                r.seed.to_string(),
                r.method.clone(),
                r.metric.clone(),
                format_f64(r.value),
            ])?;
        }
        wtr.flush()?;
        let summary = Summary {
            aggregates: self.aggregates.clone(),
            win_rates: self.win_rates.clone(),
        };
        std::fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&summary)? + "\n",
        )?;
        if !self.runtime.is_empty() {
            std::fs::write(
                dir.join("runtime.json"),
                serde_json::to_string_pretty(&self.runtime)? + "\n",
            )?;
        }
        Ok(())
    }

    /// Rebuilds a report from a `metrics.csv` file.
    pub fn read_rows(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<MetricRow>, _>>()?;
        Ok(Self::from_rows(rows))
    }
}

/// Procrustes error of an embedding against per-column standardized latents.
pub fn latent_error(coords: &Mat<f64>, z: &Dataset) -> Result<f64> {
    procrustes_error(coords, z.standardized().values())
}

fn pca_coords(x: &Dataset, k: usize) -> Result<Mat<f64>> {
    let xc = x.centered();
    let svd = trunc_svd(xc.values(), k)?;
    Ok(xc.values() * &svd.right_vectors)
}

fn largest_angle(basis: &Mat<f64>, m: &Mat<f64>) -> Result<f64> {
    Ok(principal_angles(basis, m)?.into_iter().fold(0.0, f64::max))
}

struct SeedRunner<'a> {
    cfg: &'a ExperimentConfig,
    suffix: String,
}

impl SeedRunner<'_> {
    fn metric_name(&self, base: &str) -> String {
        format!("{base}{}", self.suffix)
    }

    fn run(
        &self,
        gen: &GeneratorSpec,
        seed: u64,
        rows: &mut Vec<MetricRow>,
        runtime: &mut Vec<RuntimeStamp>,
    ) -> Result<()> {
        let p = &self.cfg.embedding;
        let mut push = |method: MethodKind, metric: String, value: f64| {
            rows.push(MetricRow {
                seed,
                method: method.name(),
                metric,
                value,
            });
        };
        let mut time = |method: MethodKind, start: Instant| {
            runtime.push(RuntimeStamp {
                seed,
                method: method.name(),
                seconds: start.elapsed().as_secs_f64(),
            });
        };
        match gen {
            GeneratorSpec::SwissRoll(spec) => {
                let (x, y, z) = gen_swiss_roll_pair(spec)?;
                let needs_graph = self
                    .cfg
                    .methods
                    .iter()
                    .any(|m| matches!(m, MethodKind::TwoManifold | MethodKind::Le));
                let gx = if needs_graph {
                    Some(knn_adjacency(&x, p.k_nn, WeightMode::Binary)?)
                } else {
                    None
                };
                for &method in &self.cfg.methods {
                    let start = Instant::now();
                    let coords = match method {
                        MethodKind::TwoManifold => {
                            let vx = PreparedView::from_graph(gx.clone().expect("graph built"))?;
                            let vy = PreparedView::from_graph(knn_adjacency(
                                &y,
                                p.k_nn,
                                WeightMode::Binary,
                            )?)?;
                            let g = ViewSource::Graph {
                                k_nn: p.k_nn,
                                weight: WeightMode::Binary,
                            };
                            let tm = TwoManifoldConfig {
                                route: p.route,
                                scaling: p.scaling,
                                graph_shift: p.graph_shift,
                                solver: p.solver,
                                ..TwoManifoldConfig::new(g, g, p.k)
                            };
                            instrumental_eigenmaps_prepared(&vx, &vy, &tm)?.coords_x
                        }
                        MethodKind::Le => {
                            le_embed_graph(
                                gx.as_ref().expect("graph built"),
                                p.k,
                                p.scaling,
                                p.solver,
                            )?
                            .coords
                        }
                        MethodKind::KernelPca => {
                            kernel_pca(
                                &x,
                                KernelSpec::Rbf {
                                    gamma: median_bandwidth(&x)?,
                                },
                                p.k,
                            )?
                            .coords
                        }
                        MethodKind::Pca => pca_coords(&x, p.k)?,
                        other => {
                            return Err(Error::Config(format!(
                                "method {} needs another generator",
                                other.name()
                            )))
                        }
                    };
                    time(method, start);
                    for metric in &self.cfg.metrics {
                        if *metric == MetricKind::Procrustes {
                            push(
                                method,
                                self.metric_name("procrustes"),
                                latent_error(&coords, &z)?,
                            );
                        }
                    }
                }
            }
            GeneratorSpec::Linear(lin) => {
                let model = LinearLatentModel::random(&lin.spec)?;
                let (x, y, _) = gen_linear(&model, lin.n)?;
                let k = lin.spec.latent_dim;
                for &method in &self.cfg.methods {
                    let start = Instant::now();
                    let basis = match method {
                        MethodKind::Pca => trunc_svd(x.centered().values(), k)?.right_vectors,
                        MethodKind::TwoSubspacePca => two_subspace_pca(&x, &y, k)?.left_vectors,
                        MethodKind::Rrr => linear_rrr(&x, &y, p.eta, k)?.left_vectors,
                        MethodKind::Cca => {
                            // (Σ_XX+η)^{1/2}·u spans the cross-covariance range
                            let cca = linear_cca(&x, &y, p.eta, k)?;
                            let sxx = symmetrize(&cross_covariance(&x, &x)?);
                            sym_apply_fn(&sym_eig(&sxx)?, |l| (l.max(0.0) + p.eta).sqrt())
                                * &cca.left_vectors
                        }
                        other => {
                            return Err(Error::Config(format!(
                                "method {} needs another generator",
                                other.name()
                            )))
                        }
                    };
                    time(method, start);
                    for metric in &self.cfg.metrics {
                        if *metric == MetricKind::PrincipalAngle {
                            push(
                                method,
                                self.metric_name("principal_angle"),
                                largest_angle(&basis, model.m_map())?,
                            );
                        }
                    }
                }
            }
            GeneratorSpec::Loop(spec) => {
                let traj = gen_loop_trajectory(spec)?;
                for &method in &self.cfg.methods {
                    let source = match method {
                        MethodKind::GraphState => ViewSource::Graph {
                            k_nn: p.k_nn,
                            weight: WeightMode::Binary,
                        },
                        MethodKind::RbfState => ViewSource::RbfMedian,
                        MethodKind::LinearState => ViewSource::Kernel {
                            kernel: KernelSpec::Linear,
                        },
                        other => {
                            return Err(Error::Config(format!(
                                "method {} needs another generator",
                                other.name()
                            )))
                        }
                    };
                    let start = Instant::now();
                    let tm = TwoManifoldConfig {
                        route: p.route,
                        scaling: p.scaling,
                        graph_shift: p.graph_shift,
                        solver: p.solver,
                        ..TwoManifoldConfig::new(source, source, self.cfg.protocol.k)
                    };
                    let curve = evaluate_transductive(
                        &traj.observations,
                        &traj.positions,
                        &tm,
                        &self.cfg.protocol,
                    )?;
                    time(method, start);
                    for metric in &self.cfg.metrics {
                        if *metric == MetricKind::HorizonRmse {
                            for (h, v) in curve.iter().enumerate() {
                                push(method, self.metric_name(&format!("rmse@h{}", h + 1)), *v);
                            }
                            push(
                                method,
                                self.metric_name("rmse_mean"),
                                curve.iter().sum::<f64>() / curve.len() as f64,
                            );
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs generator, methods and metrics for every seed (and noise level),
/// in seed order, and writes the report when `out_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let levels: Vec<Option<f64>> = match &cfg.noise_levels {
        Some(l) => l.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut rows = Vec::new();
    let mut runtime = Vec::new();
    for level in &levels {
        let suffix = level
            .map(|s| format!("[noise={}]", format_f64(s)))
            .unwrap_or_default();
        let runner = SeedRunner { cfg, suffix };
        for &seed in &cfg.seeds {
            let mut gen = cfg.generator.with_seed(seed);
            if let Some(s) = level {
                gen = gen.with_noise(*s);
            }
            log::info!("seed {seed}{}", runner.suffix);
            runner
                .run(&gen, seed, &mut rows, &mut runtime)
                .map_err(|e| e.context(format!("seed {seed}{}", runner.suffix)))?;
        }
    }
    let mut report = MetricReport::from_rows(rows);
    report.runtime = runtime;
    if let Some(dir) = &cfg.out_dir {
        report.write(dir)?;
    }
    Ok(report)
}
