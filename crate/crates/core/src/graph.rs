//! k-nearest-neighbor graphs and Laplacian Eigenmaps.

use std::collections::VecDeque;
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::{format_f64, Dataset};
use crate::error::{param, Error, Result};
use crate::kernels::{rows_of, sq_dist, weighted_center, GramMatrix, WeightVector};
use crate::linalg::{sym_eig, top_eigenpairs, LanczosOptions, Solver, SymmetricOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WeightMode {
    Binary,
    /// Edge weight `exp(−γ‖x_i − x_j‖²/2)`.
    Heat {
        gamma: f64,
    },
}

/// Row scaling applied to eigenvectors when forming coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `S^{1/2}·V` for a single graph, `P^{1/2}·U·Λ^{1/2}` for paired views.
    #[default]
    Paper,
    /// `S^{-1/2}·V` (generalized eigenvectors), `P·U·Λ^{1/2}` for paired views.
    Classic,
}

impl std::str::FromStr for Scaling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scaling::Paper),
            "classic" => Ok(Scaling::Classic),
            _ => Err(Error::Config(format!(
                "unknown scaling {s:?} (expected paper|classic)"
            ))),
        }
    }
}

/// Symmetric weighted kNN graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodGraph {
    k_nn: usize,
    mode: WeightMode,
    adjacency: Vec<Vec<(usize, f64)>>,
    degrees: Vec<f64>,
}

impl NeighborhoodGraph {
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn k_nn(&self) -> usize {
        self.k_nn
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Neighbors of vertex `i` with edge weights, sorted by index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(v, _)| v)
            .map_or(0.0, |pos| self.adjacency[i][pos].1)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Dense adjacency matrix `W`.
    pub fn adjacency_matrix(&self) -> Mat<f64> {
        let n = self.n();
        let mut w = Mat::zeros(n, n);
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, v) in row {
                w[(i, j)] = v;
            }
        }
        w
    }

    /// Number of connected components.
    pub fn components(&self) -> usize {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for &(u, _) in &self.adjacency[v] {
                    if !seen[u] {
                        seen[u] = true;
                        queue.push_back(u);
                    }
                }
            }
        }
        count
    }

    /// Edge list `i,j,weight` with `i < j`.
    pub fn write_edges_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["i", "j", "weight"])?;
        for (i, row) in self.adjacency.iter().enumerate() {
            for &(j, v) in row.iter().filter(|(j, _)| *j > i) {
                w.write_record([i.to_string(), j.to_string(), format_f64(v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Matrix-free `S^{-1/2}(W − S)S^{-1/2} + shift·I`.
    pub fn normalized_operator(&self, shift: f64) -> NormalizedGraphOperator<'_> {
        let scale = self.degrees.iter().map(|d| d.powf(-0.5)).collect();
        NormalizedGraphOperator {
            graph: self,
            scale,
            shift,
        }
    }
}

/// Sparse application of the normalized graph matrix plus a diagonal shift.
pub struct NormalizedGraphOperator<'a> {
    graph: &'a NeighborhoodGraph,
    scale: Vec<f64>,
    shift: f64,
}

impl SymmetricOperator for NormalizedGraphOperator<'_> {
    fn dim(&self) -> usize {
        self.graph.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        // S^{-1/2} S S^{-1/2} = I, so the degree term is a unit diagonal
        for (i, yi) in y.iter_mut().enumerate() {
            let acc: f64 = self.graph.adjacency[i]
                .iter()
                .map(|&(j, w)| w * self.scale[j] * x[j])
                .sum();
            *yi = self.scale[i] * acc + (self.shift - 1.0) * x[i];
        }
    }
}

/// Symmetric kNN graph: `i ~ j` when either is among the other's `k_nn`
/// nearest neighbors (Euclidean, ties to the smaller index).
pub fn knn_adjacency(x: &Dataset, k_nn: usize, mode: WeightMode) -> Result<NeighborhoodGraph> {
    let n = x.n();
    if k_nn == 0 || k_nn >= n {
        return Err(param(format!(
            "k_nn must satisfy 1 <= k_nn < n = {n}, got {k_nn}"
        )));
    }
    if let WeightMode::Heat { gamma } = mode {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(param(format!(
                "heat bandwidth must be positive, got {gamma}"
            )));
        }
    }
    x.check_finite()?;
    let rows = rows_of(x.values());
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&rows[i], &rows[j]), j)),
        );
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k_nn < cand.len() {
            cand.select_nth_unstable_by(k_nn - 1, cmp);
        }
        for &(d2, j) in &cand[..k_nn] {
            let w = match mode {
                WeightMode::Binary => 1.0,
                WeightMode::Heat { gamma } => (-0.5 * gamma * d2).exp(),
            };
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
    }
    for row in &mut adjacency {
        row.sort_by_key(|&(j, _)| j);
        row.dedup_by_key(|&mut (j, _)| j);
    }
    let degrees: Vec<f64> = adjacency
        .iter()
        .map(|r| r.iter().map(|&(_, w)| w).sum())
        .collect();
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::ZeroDegree(i));
    }
    Ok(NeighborhoodGraph {
        k_nn,
        mode,
        adjacency,
        degrees,
    })
}

/// The LE Gram `G = W − S` (flagged centered) and weights `P = S^{-1/2}`.
pub fn le_gram(graph: &NeighborhoodGraph) -> Result<(GramMatrix, WeightVector)> {
    if let Some(i) = graph.degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::ZeroDegree(i));
    }
    let mut g = graph.adjacency_matrix();
    for (i, d) in graph.degrees.iter().enumerate() {
        g[(i, i)] -= d;
    }
    let p = WeightVector::new(graph.degrees.iter().map(|d| d.powf(-0.5)).collect())?;
    Ok((GramMatrix::from_parts(g, true, false), p))
}

/// One-manifold embedding with its eigenvalues.
#[derive(Debug, Clone)]
pub struct Embedding {
    /// `n×k` coordinates.
    pub coords: Mat<f64>,
    /// Eigenvalues of the retained directions, descending.
    pub spectrum: Vec<f64>,
    /// Top eigenvalue that was dropped (0 for a graph).
    pub dropped: f64,
}

/// Laplacian Eigenmaps with the automatic solver choice.
pub fn le_embed(
    x: &Dataset,
    k_nn: usize,
    mode: WeightMode,
    k: usize,
    scaling: Scaling,
) -> Result<Embedding> {
    let graph = knn_adjacency(x, k_nn, mode)?;
    le_embed_graph(&graph, k, scaling, Solver::Auto)
}

/// Laplacian Eigenmaps on a prebuilt graph: top `k+1` eigenvectors of
/// `C = S^{-1/2}(W−S)S^{-1/2}`, first dropped, rows scaled per `scaling`.
pub fn le_embed_graph(
    graph: &NeighborhoodGraph,
    k: usize,
    scaling: Scaling,
    solver: Solver,
) -> Result<Embedding> {
    let n = graph.n();
    if k == 0 || k + 1 > n {
        return Err(param(format!(
            "target dimension must satisfy 1 <= k <= n - 1, got k = {k}, n = {n}"
        )));
    }
    let comps = graph.components();
    if comps > 1 {
        log::warn!(
            "neighborhood graph has {comps} connected components; k_nn = {} is too small",
            graph.k_nn
        );
    }
    let (values, vectors) = if solver.use_dense(n) {
        let (g, p) = le_gram(graph)?;
        let c = weighted_center(&g, &p)?;
        let spec = sym_eig(c.values())?;
        let vecs = Mat::from_fn(n, k + 1, |i, j| spec.eigenvectors[(i, j)]);
        (spec.eigenvalues[..k + 1].to_vec(), vecs)
    } else {
        let op = graph.normalized_operator(0.0);
        let spec = top_eigenpairs(&op, k + 1, LanczosOptions::default())?;
        (spec.eigenvalues, spec.eigenvectors)
    };
    let exponent = match scaling {
        Scaling::Paper => 0.5,
        Scaling::Classic => -0.5,
    };
    let row_scale: Vec<f64> = graph.degrees.iter().map(|d| d.powf(exponent)).collect();
    let coords = Mat::from_fn(n, k, |i, j| row_scale[i] * vectors[(i, j + 1)]);
    Ok(Embedding {
        coords,
        spectrum: values[1..].to_vec(),
        dropped: values[0],
    })
}
