//! Lanczos iteration with full reorthogonalization for the algebraically
//! largest eigenpairs of a symmetric operator, and top singular triplets of a
//! matrix-free linear map through its normal operator.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{normalize_sign, sym_eig, SymmetricSpectrum, TruncatedSvd};
use crate::error::{param, Error, Result};

/// A symmetric linear operator `y = A·x` on `R^n`.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// A general linear map `R^ncols → R^nrows` with access to its transpose.
pub trait LinearMap {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

/// Dense symmetric matrix as an operator.
pub struct DenseOperator<'a>(pub &'a Mat<f64>);

impl SymmetricOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        dense_matvec(self.0, x, y);
    }
}

pub(crate) fn dense_matvec(m: &Mat<f64>, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (yi, &mij) in y.iter_mut().zip(m.col_as_slice(j)) {
            *yi += mij * xj;
        }
    }
}

/// The product `A·B` of two symmetric operators of equal dimension.
pub struct ProductMap<'a> {
    pub left: &'a dyn SymmetricOperator,
    pub right: &'a dyn SymmetricOperator,
}

impl LinearMap for ProductMap<'_> {
    fn nrows(&self) -> usize {
        self.left.dim()
    }

    fn ncols(&self) -> usize {
        self.right.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; self.right.dim()];
        self.right.apply(x, &mut tmp);
        self.left.apply(&tmp, y);
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; self.left.dim()];
        self.left.apply(x, &mut tmp);
        self.right.apply(&tmp, y);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Ritz residual tolerance relative to the largest Ritz value magnitude.
    pub tol: f64,
    /// Krylov dimension cap.
    pub max_dim: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_dim: 2000,
            seed: 0x5eed,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        orthogonalize(&mut v, basis);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return Some(v);
        }
    }
    None
}

fn dense_from_operator(op: &dyn SymmetricOperator) -> Mat<f64> {
    let n = op.dim();
    let mut m = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut y);
        m.col_as_slice_mut(j).copy_from_slice(&y);
        e[j] = 0.0;
    }
    super::symmetrize(&m)
}

/// The `k` algebraically largest eigenpairs of a symmetric operator, in
/// descending order with sign-normalized eigenvectors (`n×k`).
pub fn top_eigenpairs(
    op: &dyn SymmetricOperator,
    k: usize,
    opts: LanczosOptions,
) -> Result<SymmetricSpectrum> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(param(format!(
            "requested {k} eigenpairs of a {n}-dimensional operator"
        )));
    }
    // small problems are cheaper and exact densely
    if n <= (4 * k + 40).max(64) {
        let full = sym_eig(&dense_from_operator(op))?;
        let vecs = Mat::from_fn(n, k, |i, j| full.eigenvectors[(i, j)]);
        return Ok(SymmetricSpectrum {
            eigenvalues: full.eigenvalues[..k].to_vec(),
            eigenvectors: vecs,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let max_dim = opts.max_dim.min(n).max(k + 1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_dim.min(512));
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();

    let first = random_unit(n, &mut rng, &basis)
        .ok_or_else(|| Error::Numerical("zero start vector".into()))?;
    basis.push(first);
    let mut w = vec![0.0; n];
    let mut next_check = (2 * k + 10).min(max_dim);
    let mut scale = 0.0_f64;

    loop {
        let m = basis.len();
        op.apply(&basis[m - 1], &mut w);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let a = dot(&basis[m - 1], &w);
        alpha.push(a);
        orthogonalize(&mut w, &basis);
        let b = norm(&w);
        scale = scale.max(a.abs()).max(b);
        let breakdown = b <= 1e-12 * scale.max(f64::MIN_POSITIVE);

        if m >= next_check || breakdown || m == max_dim {
            let (theta, s) = tridiagonal_eigen(&alpha, &beta)?;
            let kk = k.min(m);
            let top_mag = theta
                .iter()
                .fold(0.0_f64, |acc, t| acc.max(t.abs()))
                .max(f64::MIN_POSITIVE);
            let converged =
                m >= k && (0..kk).all(|i| (b * s[(m - 1, i)]).abs() <= opts.tol * top_mag);
            if converged || m == n {
                return Ok(ritz_pairs(&basis, &theta, &s, k));
            }
            if m == max_dim {
                let worst = (0..kk)
                    .map(|i| (b * s[(m - 1, i)]).abs())
                    .fold(0.0, f64::max);
                return Err(Error::Numerical(format!(
                    "Lanczos did not converge within {max_dim} steps (residual {worst:.2e})"
                )));
            }
            next_check = (m + (m / 4).max(10)).min(max_dim);
        }

        if breakdown {
            // invariant subspace found; continue in its orthogonal complement
            match random_unit(n, &mut rng, &basis) {
                Some(v) => {
                    beta.push(0.0);
                    basis.push(v);
                }
                None => {
                    let (theta, s) = tridiagonal_eigen(&alpha, &beta)?;
                    return Ok(ritz_pairs(&basis, &theta, &s, k.min(basis.len())));
                }
            }
        } else {
            beta.push(b);
            let q: Vec<f64> = w.iter().map(|v| v / b).collect();
            basis.push(q);
        }
    }
}

/// Eigen-decomposition of the symmetric tridiagonal matrix, descending.
fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Mat<f64>)> {
    let m = alpha.len();
    let t = Mat::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let spec = sym_eig(&t)?;
    Ok((spec.eigenvalues, spec.eigenvectors))
}

fn ritz_pairs(basis: &[Vec<f64>], theta: &[f64], s: &Mat<f64>, k: usize) -> SymmetricSpectrum {
    let n = basis[0].len();
    let m = theta.len();
    let mut vecs = Mat::zeros(n, k);
    for j in 0..k {
        let col = vecs.col_as_slice_mut(j);
        for (i, q) in basis.iter().enumerate().take(m) {
            axpy(s[(i, j)], q, col);
        }
        let nv = norm(col);
        if nv > 0.0 {
            col.iter_mut().for_each(|v| *v /= nv);
        }
        normalize_sign(col);
    }
    SymmetricSpectrum {
        eigenvalues: theta[..k].to_vec(),
        eigenvectors: vecs,
    }
}

struct NormalOperator<'a>(&'a dyn LinearMap);

impl SymmetricOperator for NormalOperator<'_> {
    fn dim(&self) -> usize {
        self.0.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut tmp = vec![0.0; self.0.nrows()];
        self.0.apply(x, &mut tmp);
        self.0.apply_transpose(&tmp, y);
    }
}

/// Top-`k` singular triplets of a linear map, from the top eigenpairs of
/// `AᵀA`; left vectors are recovered as `A·v/σ`.
pub fn top_singular_triplets(
    map: &dyn LinearMap,
    k: usize,
    opts: LanczosOptions,
) -> Result<TruncatedSvd> {
    let (p, q) = (map.nrows(), map.ncols());
    if k == 0 || k > p.min(q) {
        return Err(param(format!("k = {k} exceeds min({p}, {q})")));
    }
    let normal = NormalOperator(map);
    let eig = top_eigenpairs(&normal, k, opts)?;
    let singular_values: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut right = eig.eigenvectors;
    let mut left = Mat::zeros(p, k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let tiny = singular_values.first().copied().unwrap_or(0.0) * 1e-12;
    let mut done: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut u = vec![0.0; p];
        let sigma = singular_values[j];
        if sigma > tiny && sigma > 0.0 {
            map.apply(right.col_as_slice(j), &mut u);
            u.iter_mut().for_each(|v| *v /= sigma);
        } else {
            u = random_unit(p, &mut rng, &done).unwrap_or_else(|| vec![0.0; p]);
        }
        if normalize_sign(&mut u) {
            right.col_as_slice_mut(j).iter_mut().for_each(|v| *v = -*v);
        }
        left.col_as_slice_mut(j).copy_from_slice(&u);
        done.push(u);
    }
    Ok(TruncatedSvd {
        left_vectors: left,
        singular_values,
        right_vectors: right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{symmetrize, trunc_svd};
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        symmetrize(&(&a + a.transpose()))
    }

    #[test]
    fn agrees_with_dense_eigen() {
        let m = random_symmetric(300, 5);
        let dense = sym_eig(&m).unwrap();
        let lz = top_eigenpairs(&DenseOperator(&m), 4, LanczosOptions::default()).unwrap();
        for j in 0..4 {
            assert!((lz.eigenvalues[j] - dense.eigenvalues[j]).abs() < 1e-9);
            let d: f64 = (0..300)
                .map(|i| lz.eigenvectors[(i, j)] * dense.eigenvectors[(i, j)])
                .sum();
            assert!((d - 1.0).abs() < 1e-7, "column {j}: {d}");
        }
    }

    #[test]
    fn small_operator_falls_back_to_dense() {
        let m = random_symmetric(20, 1);
        let lz = top_eigenpairs(&DenseOperator(&m), 3, LanczosOptions::default()).unwrap();
        let dense = sym_eig(&m).unwrap();
        assert_eq!(lz.eigenvalues, dense.eigenvalues[..3].to_vec());
    }

    #[test]
    fn low_rank_operator_breaks_down_cleanly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Mat::from_fn(200, 3, |_, _| rng.random_range(-1.0..1.0));
        let m = symmetrize(&(&a * a.transpose()));
        let lz = top_eigenpairs(&DenseOperator(&m), 5, LanczosOptions::default()).unwrap();
        let dense = sym_eig(&m).unwrap();
        for j in 0..5 {
            assert!((lz.eigenvalues[j] - dense.eigenvalues[j]).abs() < 1e-9 * dense.eigenvalues[0]);
        }
    }

    #[test]
    fn product_svd_agrees_with_dense() {
        let a = random_symmetric(250, 2);
        let b = random_symmetric(250, 3);
        let prod = &a * &b;
        let dense = trunc_svd(&prod, 3).unwrap();
        let (oa, ob) = (DenseOperator(&a), DenseOperator(&b));
        let map = ProductMap {
            left: &oa,
            right: &ob,
        };
        let lz = top_singular_triplets(&map, 3, LanczosOptions::default()).unwrap();
        for j in 0..3 {
            assert!(
                (lz.singular_values[j] - dense.singular_values[j]).abs()
                    < 1e-8 * dense.singular_values[0]
            );
            let du: f64 = (0..250)
                .map(|i| lz.left_vectors[(i, j)] * dense.left_vectors[(i, j)])
                .sum();
            let dv: f64 = (0..250)
                .map(|i| lz.right_vectors[(i, j)] * dense.right_vectors[(i, j)])
                .sum();
            assert!((du - 1.0).abs() < 1e-6 && (dv - 1.0).abs() < 1e-6);
        }
    }
}
