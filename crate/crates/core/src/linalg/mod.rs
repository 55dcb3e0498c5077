//! Dense matrix building blocks shared by every other module: symmetric
//! eigendecomposition, truncated SVD, symmetric inverse square roots and
//! double centering.
//!
//! All decompositions use a deterministic sign convention: within each
//! eigenvector (or left singular vector) the entry of largest magnitude is
//! made positive. For an SVD the paired right singular vector is flipped
//! together with the left one so that `U·diag(σ)·Vᵀ` is unchanged.

mod lanczos;

pub use lanczos::{
    top_eigenpairs, top_singular_triplets, DenseOperator, LanczosOptions, LinearMap, ProductMap,
    SymmetricOperator,
};

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::kernels::GramMatrix;

/// Above this dimension [`Solver::Auto`] switches to Lanczos.
pub const AUTO_DENSE_LIMIT: usize = 3000;

/// Choice of eigensolver for top-k problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    /// Dense up to [`AUTO_DENSE_LIMIT`], Lanczos above.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

impl Solver {
    pub fn use_dense(self, n: usize) -> bool {
        match self {
            Solver::Auto => n <= AUTO_DENSE_LIMIT,
            Solver::Dense => true,
            Solver::Lanczos => false,
        }
    }
}

/// Full eigensystem of a real symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: Mat<f64>,
}

impl SymmetricSpectrum {
    /// `V·diag(λ)·Vᵀ`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let v = &self.eigenvectors;
        let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * self.eigenvalues[j]);
        &scaled * v.transpose()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Top-k singular triplets.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub left_vectors: Mat<f64>,
    pub singular_values: Vec<f64>,
    pub right_vectors: Mat<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `U·diag(σ)·Vᵀ`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let u = &self.left_vectors;
        let scaled = Mat::from_fn(u.nrows(), u.ncols(), |i, j| {
            u[(i, j)] * self.singular_values[j]
        });
        &scaled * self.right_vectors.transpose()
    }
}

pub(crate) fn check_finite(m: &Mat<f64>) -> Result<()> {
    for j in 0..m.ncols() {
        if m.col_as_slice(j).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    Ok(())
}

pub(crate) fn check_square(m: &Mat<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub fn max_abs(m: &Mat<f64>) -> f64 {
    (0..m.ncols())
        .flat_map(|j| m.col_as_slice(j).iter())
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest `|m_ij − m_ji|`.
pub fn max_asymmetry(m: &Mat<f64>) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// Frobenius norm.
pub fn frobenius(m: &Mat<f64>) -> f64 {
    m.norm_l2()
}

/// Flips `col` so its largest-magnitude entry is positive; returns whether it flipped.
pub(crate) fn normalize_sign(col: &mut [f64]) -> bool {
    let mut best = 0usize;
    let mut best_abs = -1.0_f64;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = i;
        }
    }
    if !col.is_empty() && col[best] < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
        true
    } else {
        false
    }
}

fn validated_symmetric(m: &Mat<f64>) -> Result<Mat<f64>> {
    check_square(m)?;
    check_finite(m)?;
    let asym = max_asymmetry(m);
    if asym > 1e-8 * max_abs(m).max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(symmetrize(m))
}

/// Full symmetric eigendecomposition, eigenvalues sorted descending and
/// eigenvectors sign-normalized.
pub fn sym_eig(m: &Mat<f64>) -> Result<SymmetricSpectrum> {
    let sym = validated_symmetric(m)?;
    let n = sym.nrows();
    if n == 0 {
        return Ok(SymmetricSpectrum {
            eigenvalues: vec![],
            eigenvectors: Mat::zeros(0, 0),
        });
    }
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Backend(format!("self-adjoint eigen: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns ascending order
    let eigenvalues: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let mut eigenvectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    for j in 0..n {
        normalize_sign(eigenvectors.col_as_slice_mut(j));
    }
    Ok(SymmetricSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Top-`k` singular triplets of a `p×q` matrix, taken from the full thin SVD.
pub fn trunc_svd(m: &Mat<f64>, k: usize) -> Result<TruncatedSvd> {
    let (p, q) = (m.nrows(), m.ncols());
    if k == 0 {
        return Err(param("truncation rank k must be positive"));
    }
    if k > p.min(q) {
        return Err(param(format!("k = {k} exceeds min({p}, {q})")));
    }
    check_finite(m)?;
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Backend(format!("svd: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut left = Mat::from_fn(p, k, |i, j| u[(i, j)]);
    let mut right = Mat::from_fn(q, k, |i, j| v[(i, j)]);
    let singular_values: Vec<f64> = (0..k).map(|i| s[i].max(0.0)).collect();
    for j in 0..k {
        if normalize_sign(left.col_as_slice_mut(j)) {
            right.col_as_slice_mut(j).iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(TruncatedSvd {
        left_vectors: left,
        singular_values,
        right_vectors: right,
    })
}

/// `V·diag(f(λ))·Vᵀ` for a symmetric matrix.
pub fn sym_apply_fn(spec: &SymmetricSpectrum, f: impl Fn(f64) -> f64) -> Mat<f64> {
    let v = &spec.eigenvectors;
    let fl: Vec<f64> = spec.eigenvalues.iter().map(|&l| f(l)).collect();
    let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * fl[j]);
    symmetrize(&(&scaled * v.transpose()))
}

/// Returns `R = (max(M,0) + ηI)^{-1/2}`, the symmetric inverse square root of
/// the clamped, regularized matrix.
pub fn sym_inv_sqrt(m: &Mat<f64>, eta: f64) -> Result<Mat<f64>> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(param(format!(
            "regularizer must be finite and non-negative, got {eta}"
        )));
    }
    let spec = sym_eig(m)?;
    let shifted = regularized_eigenvalues(&spec, eta)?;
    let v = &spec.eigenvectors;
    let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] / shifted[j].sqrt());
    Ok(symmetrize(&(&scaled * v.transpose())))
}

/// `(max(M,0) + ηI)^{-1}` computed through the eigendecomposition.
pub fn sym_regularized_inverse(m: &Mat<f64>, eta: f64) -> Result<Mat<f64>> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(param(format!(
            "regularizer must be finite and non-negative, got {eta}"
        )));
    }
    let spec = sym_eig(m)?;
    let shifted = regularized_eigenvalues(&spec, eta)?;
    let v = &spec.eigenvectors;
    let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] / shifted[j]);
    Ok(symmetrize(&(&scaled * v.transpose())))
}

fn regularized_eigenvalues(spec: &SymmetricSpectrum, eta: f64) -> Result<Vec<f64>> {
    let n = spec.len();
    let top = spec.eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let floor = n as f64 * f64::EPSILON * top;
    let shifted: Vec<f64> = spec.eigenvalues.iter().map(|&l| l.max(0.0) + eta).collect();
    if shifted.iter().any(|&l| l <= floor || l == 0.0) {
        return Err(Error::Singular);
    }
    Ok(shifted)
}

/// `H·M·H` with `H = I − (1/n)·11ᵀ`, computed entrywise as
/// `m_ij − rowmean_i − colmean_j + grandmean`.
pub fn center_matrix(m: &Mat<f64>) -> Mat<f64> {
    let (r, c) = (m.nrows(), m.ncols());
    if r == 0 || c == 0 {
        return m.clone();
    }
    let row_means: Vec<f64> = (0..r)
        .map(|i| (0..c).map(|j| m[(i, j)]).sum::<f64>() / c as f64)
        .collect();
    let col_means: Vec<f64> = (0..c)
        .map(|j| m.col_as_slice(j).iter().sum::<f64>() / r as f64)
        .collect();
    let grand = row_means.iter().sum::<f64>() / r as f64;
    Mat::from_fn(r, c, |i, j| m[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// Copies the upper triangle onto the lower one.
pub(crate) fn mirror_upper(m: &mut Mat<f64>) {
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// [`center_matrix`] for symmetric input, made exactly symmetric.
pub(crate) fn center_symmetric(m: &Mat<f64>) -> Mat<f64> {
    let mut c = center_matrix(m);
    mirror_upper(&mut c);
    c
}

/// Double-centers a Gram matrix. The output is flagged as centered.
pub fn double_center(g: &GramMatrix) -> Result<GramMatrix> {
    check_square(g.values())?;
    check_finite(g.values())?;
    Ok(GramMatrix::from_parts(
        center_symmetric(g.values()),
        true,
        g.is_weighted(),
    ))
}
