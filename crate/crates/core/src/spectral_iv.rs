//! Instrumental-variable spectral decompositions: two-subspace PCA, RRR and
//! CCA on explicit features, and their Gram-matrix counterparts.
//!
//! Every Gram-route decomposition factors an `n×n` operator `M = L·R` with
//! symmetric `L` built from the left view and `R` from the right view:
//!
//! | method | `L` | `R` |
//! |---|---|---|
//! | svd | `C_X` | `C_Y` |
//! | rrr | `C_X` | `C_Y(C_Y²+ηI)^{-1}C_Y` |
//! | cca | `C_X(C_X²+ηI)^{-1}C_X` | `C_Y(C_Y²+ηI)^{-1}C_Y` |

use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::{read_matrix_csv, write_matrix_csv, Dataset};
use crate::error::{param, Error, Result};
use crate::kernels::{cross_gram, GramMatrix, KernelSpec};
use crate::linalg::{
    self, sym_apply_fn, sym_eig, sym_inv_sqrt, sym_regularized_inverse, top_singular_triplets,
    trunc_svd, DenseOperator, LanczosOptions, ProductMap, Solver, SymmetricOperator, TruncatedSvd,
};

/// How a Gram-route operator is decomposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Singular value decomposition of the `n×n` product.
    #[default]
    Svd,
    /// Eigendecomposition of `R·L`; spectrum is the square root of its eigenvalues.
    Eig,
}

impl std::str::FromStr for Route {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svd" => Ok(Route::Svd),
            "eig" => Ok(Route::Eig),
            _ => Err(Error::Config(format!(
                "unknown route {s:?} (expected svd|eig)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Linear,
    GramSvd,
    GramRrr,
    GramCca,
}

/// Paired decomposition of two views over the same `n` samples.
///
/// `left_vectors`/`right_vectors` hold unit-norm columns evaluated at the
/// training samples. The projections satisfy
/// `left_vectors = C_X · left_projection` (likewise on the right), so a new
/// point with centered kernel row `k` maps to `k · left_projection`.
#[derive(Debug, Clone)]
pub struct PairedDecomposition {
    /// Svd route: left singular vectors. Eig route: eigenvectors `a` of
    /// `R·L`, scaled so `aᵀ·L·a = 1`.
    pub left_coeffs: Mat<f64>,
    /// Svd route: right singular vectors. Eig route: `b ∝ L·a` with `bᵀ·R·b = 1`.
    pub right_coeffs: Mat<f64>,
    pub left_vectors: Mat<f64>,
    pub right_vectors: Mat<f64>,
    pub left_projection: Mat<f64>,
    pub right_projection: Mat<f64>,
    /// Non-negative, non-increasing.
    pub spectrum: Vec<f64>,
    pub regularizer_eta: f64,
    pub method: Method,
    pub route: Route,
}

impl PairedDecomposition {
    pub fn k(&self) -> usize {
        self.spectrum.len()
    }

    pub fn n(&self) -> usize {
        self.left_vectors.nrows()
    }

    /// Keeps the listed components, in order.
    pub fn select(&self, cols: &[usize]) -> PairedDecomposition {
        let pick = |m: &Mat<f64>| {
            if m.ncols() == 0 {
                return m.clone();
            }
            Mat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
        };
        PairedDecomposition {
            left_coeffs: pick(&self.left_coeffs),
            right_coeffs: pick(&self.right_coeffs),
            left_vectors: pick(&self.left_vectors),
            right_vectors: pick(&self.right_vectors),
            left_projection: pick(&self.left_projection),
            right_projection: pick(&self.right_projection),
            spectrum: cols.iter().map(|&c| self.spectrum[c]).collect(),
            ..*self
        }
    }

    /// The decomposition of the swapped pair.
    pub fn swapped(&self) -> PairedDecomposition {
        PairedDecomposition {
            left_coeffs: self.right_coeffs.clone(),
            right_coeffs: self.left_coeffs.clone(),
            left_vectors: self.right_vectors.clone(),
            right_vectors: self.left_vectors.clone(),
            left_projection: self.right_projection.clone(),
            right_projection: self.left_projection.clone(),
            spectrum: self.spectrum.clone(),
            ..*self
        }
    }

    /// Writes `decomposition.json` (spectrum and metadata) and one CSV per
    /// matrix into `dir`.
    pub fn write_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let meta = BundleMeta {
            n: self.n(),
            k: self.k(),
            spectrum: self.spectrum.clone(),
            regularizer_eta: self.regularizer_eta,
            method: self.method,
            route: self.route,
        };
        std::fs::write(
            dir.join("decomposition.json"),
            serde_json::to_string_pretty(&meta)?,
        )?;
        for (name, m) in self.matrices() {
            write_matrix_csv(dir.join(format!("{name}.csv")), m)?;
        }
        Ok(())
    }

    pub fn read_bundle(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: BundleMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join("decomposition.json"))?)?;
        let load = |name: &str| -> Result<Mat<f64>> {
            let m = read_matrix_csv(dir.join(format!("{name}.csv")))?;
            if m.nrows() != meta.n || m.ncols() != meta.k {
                return Err(Error::DimensionMismatch(format!(
                    "{name}.csv is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    meta.n,
                    meta.k
                )));
            }
            Ok(m)
        };
        Ok(PairedDecomposition {
            left_coeffs: load("left_coeffs")?,
            right_coeffs: load("right_coeffs")?,
            left_vectors: load("left_vectors")?,
            right_vectors: load("right_vectors")?,
            left_projection: load("left_projection")?,
            right_projection: load("right_projection")?,
            spectrum: meta.spectrum,
            regularizer_eta: meta.regularizer_eta,
            method: meta.method,
            route: meta.route,
        })
    }

    fn matrices(&self) -> [(&'static str, &Mat<f64>); 6] {
        [
            ("left_coeffs", &self.left_coeffs),
            ("right_coeffs", &self.right_coeffs),
            ("left_vectors", &self.left_vectors),
            ("right_vectors", &self.right_vectors),
            ("left_projection", &self.left_projection),
            ("right_projection", &self.right_projection),
        ]
    }
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    n: usize,
    k: usize,
    spectrum: Vec<f64>,
    regularizer_eta: f64,
    method: Method,
    route: Route,
}

fn check_pair(x: &Dataset, y: &Dataset) -> Result<()> {
    if x.n() != y.n() {
        return Err(Error::PairedLength {
            left: x.n(),
            right: y.n(),
        });
    }
    if x.n() == 0 {
        return Err(param("empty datasets"));
    }
    x.check_finite()?;
    y.check_finite()
}

/// `(1/n)·X_cᵀ·Y_c` for row-per-sample data.
pub fn cross_covariance(x: &Dataset, y: &Dataset) -> Result<Mat<f64>> {
    check_pair(x, y)?;
    let n = x.n() as f64;
    let (xc, yc) = (x.centered(), y.centered());
    let c = xc.values().transpose() * yc.values();
    Ok(Mat::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)] / n))
}

/// SVD of the centered cross-covariance, truncated to `k`.
pub fn two_subspace_pca(x: &Dataset, y: &Dataset, k: usize) -> Result<TruncatedSvd> {
    trunc_svd(&cross_covariance(x, y)?, k)
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(param(format!(
            "regularizer must be finite and non-negative, got {eta}"
        )));
    }
    Ok(())
}

/// SVD of the `d₁×n` matrix `Σ_XY(Σ_YY + ηI)^{-1}·Y_cᵀ`, truncated to `k`.
pub fn linear_rrr(x: &Dataset, y: &Dataset, eta: f64, k: usize) -> Result<TruncatedSvd> {
    check_eta(eta)?;
    let sxy = cross_covariance(x, y)?;
    let syy = cross_covariance(y, y)?;
    let inv = sym_regularized_inverse(&linalg::symmetrize(&syy), eta)?;
    let yc = y.centered();
    let m = &sxy * &inv * yc.values().transpose();
    trunc_svd(&m, k)
}

/// SVD of `(Σ_XX+ηI)^{-1/2}·Σ_XY·(Σ_YY+ηI)^{-1/2}`; singular values are
/// canonical correlations.
pub fn linear_cca(x: &Dataset, y: &Dataset, eta: f64, k: usize) -> Result<TruncatedSvd> {
    check_eta(eta)?;
    let sxy = cross_covariance(x, y)?;
    let wx = sym_inv_sqrt(&linalg::symmetrize(&cross_covariance(x, x)?), eta)?;
    let wy = sym_inv_sqrt(&linalg::symmetrize(&cross_covariance(y, y)?), eta)?;
    trunc_svd(&(&wx * &sxy * &wy), k)
}

fn check_grams(c_x: &GramMatrix, c_y: &GramMatrix, k: usize) -> Result<usize> {
    let n = c_x.n();
    if c_y.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "Gram sizes {} and {} differ",
            n,
            c_y.n()
        )));
    }
    if !c_x.is_centered() || !c_y.is_centered() {
        return Err(param(
            "Gram-route decompositions require centered Gram matrices",
        ));
    }
    if k == 0 || k > n {
        return Err(param(format!("k must satisfy 1 <= k <= n = {n}, got {k}")));
    }
    Ok(n)
}

/// Decomposition of `C_X·C_Y`.
pub fn gram_svd(
    c_x: &GramMatrix,
    c_y: &GramMatrix,
    k: usize,
    route: Route,
) -> Result<PairedDecomposition> {
    gram_svd_with(c_x, c_y, k, route, Solver::Auto)
}

pub fn gram_svd_with(
    c_x: &GramMatrix,
    c_y: &GramMatrix,
    k: usize,
    route: Route,
    solver: Solver,
) -> Result<PairedDecomposition> {
    check_grams(c_x, c_y, k)?;
    let factors = Factors {
        l: c_x.values().clone(),
        r: c_y.values().clone(),
        fl: None,
        fr: None,
    };
    decompose(&factors, k, route, solver, Method::GramSvd, 0.0)
}

/// Decomposition of `C_X·C_Y(C_Y²+ηI)^{-1}C_Y`.
pub fn gram_rrr(
    c_x: &GramMatrix,
    c_y: &GramMatrix,
    eta: f64,
    k: usize,
    route: Route,
) -> Result<PairedDecomposition> {
    check_grams(c_x, c_y, k)?;
    check_positive_eta(eta)?;
    let (pr, fr) = whitened_projection(c_y.values(), eta)?;
    let factors = Factors {
        l: c_x.values().clone(),
        r: pr,
        fl: None,
        fr: Some(fr),
    };
    decompose(&factors, k, route, Solver::Dense, Method::GramRrr, eta)
}

/// Decomposition of `C_X(C_X²+ηI)^{-1}C_X·C_Y(C_Y²+ηI)^{-1}C_Y`.
pub fn gram_cca(
    c_x: &GramMatrix,
    c_y: &GramMatrix,
    eta: f64,
    k: usize,
    route: Route,
) -> Result<PairedDecomposition> {
    check_grams(c_x, c_y, k)?;
    check_positive_eta(eta)?;
    let (pl, fl) = whitened_projection(c_x.values(), eta)?;
    let (pr, fr) = whitened_projection(c_y.values(), eta)?;
    let factors = Factors {
        l: pl,
        r: pr,
        fl: Some(fl),
        fr: Some(fr),
    };
    decompose(&factors, k, route, Solver::Dense, Method::GramCca, eta)
}

fn check_positive_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(param(format!("regularizer must be positive, got {eta}")));
    }
    Ok(())
}

/// Returns `C(C²+ηI)^{-1}C` and `(C²+ηI)^{-1}C`, both through the eigenvalues of `C`.
fn whitened_projection(c: &Mat<f64>, eta: f64) -> Result<(Mat<f64>, Mat<f64>)> {
    let spec = sym_eig(c)?;
    let proj = sym_apply_fn(&spec, |l| l * l / (l * l + eta));
    let half = sym_apply_fn(&spec, |l| l / (l * l + eta));
    Ok((proj, half))
}

/// `L = C_X·F_X`, `R = C_Y·F_Y` with `F = I` when absent.
struct Factors {
    l: Mat<f64>,
    r: Mat<f64>,
    fl: Option<Mat<f64>>,
    fr: Option<Mat<f64>>,
}

fn apply_opt(f: &Option<Mat<f64>>, m: Mat<f64>) -> Mat<f64> {
    match f {
        Some(f) => f * m,
        None => m,
    }
}

/// Columns scaled by `1/s` where `s` is positive, zeroed otherwise.
fn divide_columns(m: &Mat<f64>, s: &[f64], floor: f64) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        if s[j] > floor {
            m[(i, j)] / s[j]
        } else {
            0.0
        }
    })
}

fn col_norms(m: &Mat<f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|j| m.col_as_slice(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

fn decompose(
    f: &Factors,
    k: usize,
    route: Route,
    solver: Solver,
    method: Method,
    eta: f64,
) -> Result<PairedDecomposition> {
    match route {
        Route::Svd => {
            let svd = if solver.use_dense(f.l.nrows()) {
                trunc_svd(&(&f.l * &f.r), k)?
            } else {
                let (lo, ro) = (DenseOperator(&f.l), DenseOperator(&f.r));
                top_singular_triplets(
                    &ProductMap {
                        left: &lo,
                        right: &ro,
                    },
                    k,
                    LanczosOptions::default(),
                )?
            };
            Ok(from_svd(svd, &f.l, &f.r, &f.fl, &f.fr, method, eta))
        }
        Route::Eig => eig_route(f, k, method, eta),
    }
}

/// Fills in projections for a truncated SVD of `L·R`.
fn from_svd(
    svd: TruncatedSvd,
    l: &Mat<f64>,
    r: &Mat<f64>,
    fl: &Option<Mat<f64>>,
    fr: &Option<Mat<f64>>,
    method: Method,
    eta: f64,
) -> PairedDecomposition {
    let s = &svd.singular_values;
    let floor = s.first().copied().unwrap_or(0.0) * 1e-13;
    // U = L·R·V/σ = C_X·[F_X·R·V/σ],  V = R·L·U/σ = C_Y·[F_Y·L·U/σ]
    let left_projection = apply_opt(fl, divide_columns(&(r * &svd.right_vectors), s, floor));
    let right_projection = apply_opt(fr, divide_columns(&(l * &svd.left_vectors), s, floor));
    PairedDecomposition {
        left_coeffs: svd.left_vectors.clone(),
        right_coeffs: svd.right_vectors.clone(),
        left_vectors: svd.left_vectors,
        right_vectors: svd.right_vectors,
        left_projection,
        right_projection,
        spectrum: svd.singular_values,
        regularizer_eta: eta,
        method,
        route: Route::Svd,
    }
}

/// Sparse-operator SVD of `(A + shift_a·I)(B + shift_b·I)` style products:
/// any two symmetric operators, top `k` triplets by Lanczos. Projections are
/// left empty (graph views have no out-of-sample extension).
pub fn operator_svd(
    left: &dyn SymmetricOperator,
    right: &dyn SymmetricOperator,
    k: usize,
    opts: LanczosOptions,
) -> Result<PairedDecomposition> {
    if left.dim() != right.dim() {
        return Err(Error::DimensionMismatch(format!(
            "operator sizes {} and {} differ",
            left.dim(),
            right.dim()
        )));
    }
    let svd = top_singular_triplets(&ProductMap { left, right }, k, opts)?;
    let n = left.dim();
    Ok(PairedDecomposition {
        left_coeffs: svd.left_vectors.clone(),
        right_coeffs: svd.right_vectors.clone(),
        left_vectors: svd.left_vectors,
        right_vectors: svd.right_vectors,
        left_projection: Mat::zeros(n, 0),
        right_projection: Mat::zeros(n, 0),
        spectrum: svd.singular_values,
        regularizer_eta: 0.0,
        method: Method::GramSvd,
        route: Route::Svd,
    })
}

/// Eigen-construction: with `T = L^{1/2}·R·L^{1/2}`, `T·q = μ·q`, the vector
/// `v = R·L^{1/2}·q` satisfies `R·L·v = μ·v` and `vᵀ·L·v = μ²`.
fn eig_route(f: &Factors, k: usize, method: Method, eta: f64) -> Result<PairedDecomposition> {
    let n = f.l.nrows();
    let l_spec = sym_eig(&f.l)?;
    check_psd(&l_spec.eigenvalues, "left")?;
    check_psd(&sym_eig(&f.r)?.eigenvalues, "right")?;
    let l_half = sym_apply_fn(&l_spec, |v| v.max(0.0).sqrt());
    let t = linalg::symmetrize(&(&l_half * &f.r * &l_half));
    let t_spec = sym_eig(&t)?;
    let top = t_spec.eigenvalues.first().copied().unwrap_or(0.0).abs();
    let tol = 1e-10 * top.max(f64::MIN_POSITIVE);
    let mu: Vec<f64> = t_spec.eigenvalues[..k].to_vec();
    if let Some(&bad) = mu.iter().find(|&&m| m < -tol) {
        return Err(Error::Numerical(format!(
            "eigenvalue {bad:.3e} of R·L is negative"
        )));
    }
    let mu: Vec<f64> = mu.iter().map(|m| m.max(0.0)).collect();
    let q = Mat::from_fn(n, k, |i, j| t_spec.eigenvectors[(i, j)]);
    let v = &f.r * (&l_half * &q);
    let floor = tol.max(top * 1e-13);
    let left_coeffs = divide_columns(&v, &mu, floor);
    let la = &f.l * &left_coeffs;
    let rla = &f.r * &la;
    // bᵀRb = 1 with b ∝ L·a
    let b_norm: Vec<f64> = (0..k)
        .map(|j| {
            let s: f64 = la
                .col_as_slice(j)
                .iter()
                .zip(rla.col_as_slice(j))
                .map(|(a, b)| a * b)
                .sum();
            s.max(0.0).sqrt()
        })
        .collect();
    let right_coeffs = divide_columns(&la, &b_norm, 0.0);
    let la_norm = col_norms(&la);
    let rla_norm = col_norms(&rla);
    let mut left_vectors = divide_columns(&la, &la_norm, 0.0);
    let mut right_vectors = divide_columns(&rla, &rla_norm, 0.0);
    let mut left_projection = apply_opt(&f.fl, divide_columns(&left_coeffs, &la_norm, 0.0));
    let mut right_projection = apply_opt(&f.fr, divide_columns(&la, &rla_norm, 0.0));
    let mut left_coeffs = left_coeffs;
    let mut right_coeffs = right_coeffs;
    for j in 0..k {
        if linalg::normalize_sign(left_vectors.col_as_slice_mut(j)) {
            for m in [&mut left_coeffs, &mut left_projection] {
                m.col_as_slice_mut(j).iter_mut().for_each(|x| *x = -*x);
            }
        }
        if linalg::normalize_sign(right_vectors.col_as_slice_mut(j)) {
            for m in [&mut right_coeffs, &mut right_projection] {
                m.col_as_slice_mut(j).iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    Ok(PairedDecomposition {
        left_coeffs,
        right_coeffs,
        left_vectors,
        right_vectors,
        left_projection,
        right_projection,
        spectrum: mu.iter().map(|m| m.sqrt()).collect(),
        regularizer_eta: eta,
        method,
        route: Route::Eig,
    })
}

fn check_psd(eigenvalues: &[f64], side: &str) -> Result<()> {
    let top = eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let low = eigenvalues.last().copied().unwrap_or(0.0);
    if low < -1e-9 * top.max(1.0) {
        return Err(Error::Numerical(format!(
            "eig route needs positive semidefinite inputs; {side} factor has eigenvalue {low:.3e}"
        )));
    }
    Ok(())
}

/// Explicit-kernel view kept for out-of-sample evaluation: training points,
/// kernel, and the centering statistics of the raw training Gram.
#[derive(Debug, Clone)]
pub struct KernelView {
    train: Dataset,
    spec: KernelSpec,
    col_means: Vec<f64>,
    grand_mean: f64,
}

impl KernelView {
    /// `raw` must be the uncentered Gram of `train` under `spec`.
    pub fn new(train: Dataset, spec: KernelSpec, raw: &GramMatrix) -> Result<Self> {
        if matches!(spec, KernelSpec::Precomputed) {
            return Err(Error::NoOutOfSample);
        }
        if raw.is_centered() || raw.is_weighted() || raw.n() != train.n() {
            return Err(param("kernel view needs the raw training Gram matrix"));
        }
        let n = raw.n();
        let col_means: Vec<f64> = (0..n)
            .map(|j| raw.values().col_as_slice(j).iter().sum::<f64>() / n as f64)
            .collect();
        let grand_mean = col_means.iter().sum::<f64>() / n as f64;
        Ok(Self {
            train,
            spec,
            col_means,
            grand_mean,
        })
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    /// Centered kernel rows `k(x, x_j) − mean_l k(x, x_l) − mean_i G_ij + mean G`.
    pub fn centered_rows(&self, x_new: &Dataset) -> Result<Mat<f64>> {
        let k = cross_gram(x_new, &self.train, self.spec)?;
        let n = self.train.n() as f64;
        let row_means: Vec<f64> = (0..k.nrows())
            .map(|i| (0..k.ncols()).map(|j| k[(i, j)]).sum::<f64>() / n)
            .collect();
        Ok(Mat::from_fn(k.nrows(), k.ncols(), |i, j| {
            k[(i, j)] - row_means[i] - self.col_means[j] + self.grand_mean
        }))
    }

    /// Values of the unit-norm functions behind `projection` at new points.
    pub fn project(&self, x_new: &Dataset, projection: &Mat<f64>) -> Result<Mat<f64>> {
        if projection.nrows() != self.train.n() {
            return Err(Error::NoOutOfSample);
        }
        Ok(self.centered_rows(x_new)? * projection)
    }
}
