//! Instrumental Eigenmaps: denoised embeddings of two paired views, each
//! acting as the instrument for the other.

use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{param, Error, Result};
use crate::graph::{knn_adjacency, le_gram, NeighborhoodGraph, Scaling, WeightMode};
use crate::kernels::{
    gram, median_bandwidth, weighted_center, GramMatrix, KernelSpec, WeightVector,
};
use crate::linalg::{
    double_center, sym_eig, DenseOperator, LanczosOptions, Solver, SymmetricOperator,
};
use crate::spectral_iv::{gram_svd_with, operator_svd, KernelView, PairedDecomposition, Route};

/// Default spectral shift added to normalized graph matrices.
pub const DEFAULT_GRAPH_SHIFT: f64 = 1.0;

/// Where a view's Gram matrix comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ViewSource {
    Kernel {
        kernel: KernelSpec,
    },
    /// RBF kernel with the median-heuristic bandwidth of the view's data.
    RbfMedian,
    Graph {
        k_nn: usize,
        weight: WeightMode,
    },
}

impl ViewSource {
    pub fn is_graph(&self) -> bool {
        matches!(self, ViewSource::Graph { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ViewSource::Kernel {
                kernel: KernelSpec::Precomputed,
            } => Err(Error::Config(
                "precomputed Grams enter through PreparedView::from_gram".into(),
            )),
            ViewSource::Kernel { kernel } => kernel.validate(),
            ViewSource::RbfMedian => Ok(()),
            ViewSource::Graph { k_nn, .. } if *k_nn == 0 => Err(param("k_nn must be positive")),
            ViewSource::Graph { .. } => Ok(()),
        }
    }
}

fn default_shift() -> f64 {
    DEFAULT_GRAPH_SHIFT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoManifoldConfig {
    pub view_x: ViewSource,
    pub view_y: ViewSource,
    pub k: usize,
    #[serde(default)]
    pub route: Route,
    #[serde(default)]
    pub scaling: Scaling,
    /// Defaults to true when either view is a graph.
    #[serde(default)]
    pub drop_first: Option<bool>,
    /// Added to the diagonal of normalized graph matrices before the product
    /// is decomposed. With `0` the product's top singular directions are the
    /// most oscillatory graph modes.
    #[serde(default = "default_shift")]
    pub graph_shift: f64,
    #[serde(default)]
    pub solver: Solver,
}

impl TwoManifoldConfig {
    pub fn new(view_x: ViewSource, view_y: ViewSource, k: usize) -> Self {
        Self {
            view_x,
            view_y,
            k,
            route: Route::Svd,
            scaling: Scaling::Paper,
            drop_first: None,
            graph_shift: DEFAULT_GRAPH_SHIFT,
            solver: Solver::Auto,
        }
    }

    pub fn graphs(k_nn: usize, k: usize) -> Self {
        let g = ViewSource::Graph {
            k_nn,
            weight: WeightMode::Binary,
        };
        Self::new(g, g, k)
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }

    pub fn effective_drop_first(&self) -> bool {
        self.drop_first
            .unwrap_or(self.view_x.is_graph() || self.view_y.is_graph())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(param("target dimension k must be at least 1"));
        }
        if !self.graph_shift.is_finite() {
            return Err(param("graph shift must be finite"));
        }
        self.view_x.validate()?;
        self.view_y.validate()
    }
}

/// A view reduced to its weighted centered Gram matrix `C = P·B·P`.
#[derive(Debug, Clone)]
pub struct PreparedView {
    pub c: GramMatrix,
    pub weights: WeightVector,
    pub graph: Option<NeighborhoodGraph>,
    /// Present for explicit kernels; enables out-of-sample embedding.
    pub kernel: Option<KernelView>,
}

impl PreparedView {
    pub fn from_dataset(x: &Dataset, source: ViewSource) -> Result<Self> {
        source.validate()?;
        match source {
            ViewSource::Kernel { kernel } => Self::from_kernel(x, kernel),
            ViewSource::RbfMedian => Self::from_kernel(
                x,
                KernelSpec::Rbf {
                    gamma: median_bandwidth(x)?,
                },
            ),
            ViewSource::Graph { k_nn, weight } => {
                let graph = knn_adjacency(x, k_nn, weight)?;
                Self::from_graph(graph)
            }
        }
    }

    fn from_kernel(x: &Dataset, spec: KernelSpec) -> Result<Self> {
        let raw = gram(x, spec)?;
        let weights = WeightVector::ones(x.n());
        let c = weighted_center(&double_center(&raw)?, &weights)?;
        let kernel = Some(KernelView::new(x.clone(), spec, &raw)?);
        Ok(Self {
            c,
            weights,
            graph: None,
            kernel,
        })
    }

    pub fn from_graph(graph: NeighborhoodGraph) -> Result<Self> {
        let (g, p) = le_gram(&graph)?;
        let c = weighted_center(&g, &p)?;
        Ok(Self {
            c,
            weights: p,
            graph: Some(graph),
            kernel: None,
        })
    }

    /// A precomputed Gram matrix with weights (all ones when unweighted).
    /// Already-weighted inputs are taken as `C`.
    pub fn from_gram(g: GramMatrix, weights: WeightVector) -> Result<Self> {
        let c = if g.is_weighted() {
            g
        } else {
            weighted_center(&g, &weights)?
        };
        Ok(Self {
            c,
            weights,
            graph: None,
            kernel: None,
        })
    }

    pub fn n(&self) -> usize {
        self.c.n()
    }

    pub fn is_graph(&self) -> bool {
        self.graph.is_some()
    }

    /// `C + shift·I` for graph views, `C` otherwise.
    pub fn operator_matrix(&self, graph_shift: f64) -> GramMatrix {
        if self.is_graph() && graph_shift != 0.0 {
            let mut m = self.c.values().clone();
            for i in 0..m.nrows() {
                m[(i, i)] += graph_shift;
            }
            GramMatrix::with_flags(m, true, true).expect("shifted symmetric matrix stays symmetric")
        } else {
            self.c.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub x_hash: String,
    pub y_hash: String,
    /// Seed of the generator that produced the data, when known.
    pub data_seed: Option<u64>,
    pub lanczos_seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingResult {
    pub coords_x: Mat<f64>,
    pub coords_y: Mat<f64>,
    /// Spectrum of the retained components.
    pub spectrum: Vec<f64>,
    /// Leading value removed by `drop_first`.
    pub dropped: Option<f64>,
    pub config: TwoManifoldConfig,
    pub provenance: Provenance,
    /// Retained components of the underlying decomposition.
    pub decomposition: PairedDecomposition,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingMeta {
    spectrum: Vec<f64>,
    dropped: Option<f64>,
    config: TwoManifoldConfig,
    provenance: Provenance,
}

impl EmbeddingResult {
    pub fn n(&self) -> usize {
        self.coords_x.nrows()
    }

    /// Writes `coords_x.csv`, `coords_y.csv` and `embedding.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let names: Vec<String> = (1..=self.spectrum.len()).map(|j| format!("e{j}")).collect();
        Dataset::with_columns(self.coords_x.clone(), names.clone())?
            .write_csv(dir.join("coords_x.csv"))?;
        Dataset::with_columns(self.coords_y.clone(), names)?.write_csv(dir.join("coords_y.csv"))?;
        let meta = EmbeddingMeta {
            spectrum: self.spectrum.clone(),
            dropped: self.dropped,
            config: self.config.clone(),
            provenance: self.provenance.clone(),
        };
        std::fs::write(
            dir.join("embedding.json"),
            serde_json::to_string_pretty(&meta)?,
        )?;
        Ok(())
    }
}

/// Runs the full pipeline on two paired datasets.
pub fn instrumental_eigenmaps(
    x: &Dataset,
    y: &Dataset,
    cfg: &TwoManifoldConfig,
) -> Result<EmbeddingResult> {
    cfg.validate()?;
    if x.n() != y.n() {
        return Err(Error::PairedLength {
            left: x.n(),
            right: y.n(),
        });
    }
    let vx = PreparedView::from_dataset(x, cfg.view_x).map_err(|e| e.context("view x"))?;
    let vy = PreparedView::from_dataset(y, cfg.view_y).map_err(|e| e.context("view y"))?;
    let mut out = instrumental_eigenmaps_prepared(&vx, &vy, cfg)?;
    out.provenance.x_hash = x.content_hash();
    out.provenance.y_hash = y.content_hash();
    Ok(out)
}

/// Decomposes two prepared views and forms `E = P^{1/2}·U·Λ^{1/2}` (paper
/// scaling) or `E = P·U·Λ^{1/2}` (classic).
pub fn instrumental_eigenmaps_prepared(
    vx: &PreparedView,
    vy: &PreparedView,
    cfg: &TwoManifoldConfig,
) -> Result<EmbeddingResult> {
    cfg.validate()?;
    let n = vx.n();
    if vy.n() != n {
        return Err(Error::PairedLength {
            left: n,
            right: vy.n(),
        });
    }
    let drop = cfg.effective_drop_first();
    let m = cfg.k + usize::from(drop);
    if m > n {
        return Err(param(format!("k = {} (+1 dropped) exceeds n = {n}", cfg.k)));
    }
    let opts = LanczosOptions::default();
    let dense = cfg.route == Route::Eig || cfg.solver.use_dense(n);
    let mut dec = if dense {
        let (cx, cy) = (
            vx.operator_matrix(cfg.graph_shift),
            vy.operator_matrix(cfg.graph_shift),
        );
        gram_svd_with(&cx, &cy, m, cfg.route, Solver::Dense)?
    } else {
        let ox = view_operator(vx, cfg.graph_shift);
        let oy = view_operator(vy, cfg.graph_shift);
        operator_svd(ox.as_ref(), oy.as_ref(), m, opts)?
    };
    symmetric_signs(&mut dec);
    let sel: Vec<usize> = if drop {
        (1..m).collect()
    } else {
        (0..m).collect()
    };
    let dropped = drop.then(|| dec.spectrum[0]);
    let dec = dec.select(&sel);
    let coords_x = coordinates(&dec.left_vectors, &dec.spectrum, &vx.weights, cfg.scaling);
    let coords_y = coordinates(&dec.right_vectors, &dec.spectrum, &vy.weights, cfg.scaling);
    Ok(EmbeddingResult {
        coords_x,
        coords_y,
        spectrum: dec.spectrum.clone(),
        dropped,
        config: cfg.clone(),
        provenance: Provenance {
            lanczos_seed: (!dense).then_some(opts.seed),
            ..Provenance::default()
        },
        decomposition: dec,
    })
}

enum ViewOperator<'a> {
    Graph(crate::graph::NormalizedGraphOperator<'a>),
    Dense(DenseOperator<'a>),
}

impl ViewOperator<'_> {
    fn as_ref(&self) -> &dyn SymmetricOperator {
        match self {
            ViewOperator::Graph(g) => g,
            ViewOperator::Dense(d) => d,
        }
    }
}

fn view_operator(v: &PreparedView, shift: f64) -> ViewOperator<'_> {
    match &v.graph {
        Some(g) => ViewOperator::Graph(g.normalized_operator(shift)),
        None => ViewOperator::Dense(DenseOperator(v.c.values())),
    }
}

/// Row weights `P^{1/2}` (paper) or `P` (classic) times `U·Λ^{1/2}`.
pub fn coordinates(
    vectors: &Mat<f64>,
    spectrum: &[f64],
    weights: &WeightVector,
    scaling: Scaling,
) -> Mat<f64> {
    let e = match scaling {
        Scaling::Paper => 0.5,
        Scaling::Classic => 1.0,
    };
    let w: Vec<f64> = weights.entries().iter().map(|p| p.powf(e)).collect();
    let root: Vec<f64> = spectrum.iter().map(|s| s.max(0.0).sqrt()).collect();
    Mat::from_fn(vectors.nrows(), vectors.ncols(), |i, j| {
        w[i] * vectors[(i, j)] * root[j]
    })
}

/// Picks each component's sign from the largest-magnitude entry across both
/// sides, so swapping the views swaps the outputs.
fn symmetric_signs(d: &mut PairedDecomposition) {
    for j in 0..d.k() {
        let best = |m: &Mat<f64>| {
            m.col_as_slice(j).iter().copied().fold(0.0_f64, |acc, v| {
                if v.abs() > acc.abs() {
                    v
                } else {
                    acc
                }
            })
        };
        let (l, r) = (best(&d.left_vectors), best(&d.right_vectors));
        let lead = if r.abs() > l.abs() { r } else { l };
        if lead < 0.0 {
            for m in [
                &mut d.left_coeffs,
                &mut d.right_coeffs,
                &mut d.left_vectors,
                &mut d.right_vectors,
            ] {
                m.col_as_slice_mut(j).iter_mut().for_each(|v| *v = -*v);
            }
            for m in [&mut d.left_projection, &mut d.right_projection] {
                if m.ncols() > j {
                    m.col_as_slice_mut(j).iter_mut().for_each(|v| *v = -*v);
                }
            }
        }
    }
}

/// One-view kernel PCA baseline: `V·Λ^{1/2}` of the double-centered Gram.
pub fn kernel_pca(x: &Dataset, spec: KernelSpec, k: usize) -> Result<crate::graph::Embedding> {
    if k == 0 || k > x.n() {
        return Err(param(format!("k must satisfy 1 <= k <= n, got {k}")));
    }
    let c = double_center(&gram(x, spec)?)?;
    let eig = sym_eig(c.values())?;
    let coords = Mat::from_fn(x.n(), k, |i, j| {
        eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt()
    });
    Ok(crate::graph::Embedding {
        coords,
        spectrum: eig.eigenvalues[..k].to_vec(),
        dropped: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    fn linear() -> ViewSource {
        ViewSource::Kernel {
            kernel: KernelSpec::Linear,
        }
    }

    #[test]
    fn identical_views_give_identical_coordinates() {
        let x = gaussian(40, 3, 1);
        let cfg = TwoManifoldConfig::new(linear(), linear(), 3);
        let r = instrumental_eigenmaps(&x, &x, &cfg).unwrap();
        for j in 0..3 {
            for i in 0..40 {
                assert!((r.coords_x[(i, j)] - r.coords_y[(i, j)]).abs() < 1e-8);
            }
        }
        assert!(r.dropped.is_none());
    }

    #[test]
    fn paired_length_is_checked() {
        let cfg = TwoManifoldConfig::new(linear(), linear(), 2);
        let err =
            instrumental_eigenmaps(&gaussian(100, 2, 0), &gaussian(99, 2, 1), &cfg).unwrap_err();
        assert!(matches!(
            err,
            Error::PairedLength {
                left: 100,
                right: 99
            }
        ));
    }

    #[test]
    fn too_many_components_rejected() {
        let cfg = TwoManifoldConfig::graphs(3, 10);
        assert!(instrumental_eigenmaps(&gaussian(10, 2, 0), &gaussian(10, 2, 1), &cfg).is_err());
    }

    #[test]
    fn swapping_views_swaps_outputs() {
        let x = gaussian(60, 2, 2);
        let y = gaussian(60, 3, 3);
        let cfg = TwoManifoldConfig::graphs(6, 2);
        let a = instrumental_eigenmaps(&x, &y, &cfg).unwrap();
        let b = instrumental_eigenmaps(&y, &x, &cfg).unwrap();
        for j in 0..2 {
            assert!((a.spectrum[j] - b.spectrum[j]).abs() < 1e-10);
            for i in 0..60 {
                assert!((a.coords_x[(i, j)] - b.coords_y[(i, j)]).abs() < 1e-8);
                assert!((a.coords_y[(i, j)] - b.coords_x[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn spectrum_matches_gram_svd_of_constructed_matrices() {
        let x = gaussian(50, 2, 4);
        let y = gaussian(50, 2, 5);
        let cfg = TwoManifoldConfig::graphs(5, 3);
        let r = instrumental_eigenmaps(&x, &y, &cfg).unwrap();
        let vx = PreparedView::from_dataset(&x, cfg.view_x).unwrap();
        let vy = PreparedView::from_dataset(&y, cfg.view_y).unwrap();
        let d = crate::spectral_iv::gram_svd(
            &vx.operator_matrix(1.0),
            &vy.operator_matrix(1.0),
            4,
            Route::Svd,
        )
        .unwrap();
        for j in 0..3 {
            assert!((r.spectrum[j] - d.spectrum[j + 1]).abs() < 1e-12);
        }
        assert!((r.dropped.unwrap() - d.spectrum[0]).abs() < 1e-12);
    }

    #[test]
    fn mixed_sources_drop_first_by_default() {
        let cfg = TwoManifoldConfig::new(
            ViewSource::Graph {
                k_nn: 4,
                weight: WeightMode::Binary,
            },
            ViewSource::RbfMedian,
            2,
        );
        assert!(cfg.effective_drop_first());
        let r = instrumental_eigenmaps(&gaussian(30, 2, 6), &gaussian(30, 2, 7), &cfg).unwrap();
        assert_eq!(r.coords_x.ncols(), 2);
    }

    #[test]
    fn classic_and_paper_coincide_for_unit_weights() {
        let x = gaussian(25, 2, 8);
        let y = gaussian(25, 2, 9);
        let a =
            instrumental_eigenmaps(&x, &y, &TwoManifoldConfig::new(linear(), linear(), 2)).unwrap();
        let b = instrumental_eigenmaps(
            &x,
            &y,
            &TwoManifoldConfig::new(linear(), linear(), 2).with_scaling(Scaling::Classic),
        )
        .unwrap();
        assert_eq!(a.coords_x, b.coords_x);
    }

    #[test]
    fn lanczos_path_matches_dense_path() {
        let x = gaussian(300, 2, 10);
        let y = gaussian(300, 2, 11);
        let mut cfg = TwoManifoldConfig::graphs(8, 2);
        cfg.solver = Solver::Dense;
        let a = instrumental_eigenmaps(&x, &y, &cfg).unwrap();
        cfg.solver = Solver::Lanczos;
        let b = instrumental_eigenmaps(&x, &y, &cfg).unwrap();
        for j in 0..2 {
            assert!((a.spectrum[j] - b.spectrum[j]).abs() < 1e-9);
            for i in 0..300 {
                assert!((a.coords_x[(i, j)] - b.coords_x[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn kernel_pca_matches_linear_spectrum() {
        let x = gaussian(20, 3, 12);
        let e = kernel_pca(&x, KernelSpec::Linear, 2).unwrap();
        assert!(e.spectrum[0] >= e.spectrum[1]);
        assert_eq!(e.coords.nrows(), 20);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = TwoManifoldConfig::new(
            ViewSource::Graph {
                k_nn: 5,
                weight: WeightMode::Heat { gamma: 0.5 },
            },
            ViewSource::Kernel {
                kernel: KernelSpec::Rbf { gamma: 2.0 },
            },
            3,
        );
        let text = serde_json::to_string(&cfg).unwrap();
        let back: TwoManifoldConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let minimal: TwoManifoldConfig = serde_json::from_str(
            r#"{"view_x":{"source":"rbf_median"},"view_y":{"source":"graph","k_nn":5,"weight":{"mode":"binary"}},"k":2}"#,
        )
        .unwrap();
        assert_eq!(minimal.graph_shift, DEFAULT_GRAPH_SHIFT);
        assert_eq!(minimal.route, Route::Svd);
    }

    #[test]
    fn result_serializes() {
        let x = gaussian(20, 2, 13);
        let r = instrumental_eigenmaps(&x, &x, &TwoManifoldConfig::graphs(4, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        let back = Dataset::read_csv(dir.path().join("coords_x.csv")).unwrap();
        assert_eq!(back.values(), &r.coords_x);
        assert!(dir.path().join("embedding.json").exists());
    }
}
