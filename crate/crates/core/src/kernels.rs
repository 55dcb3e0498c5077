//! Kernel functions, Gram matrices and the center-then-weight pipeline.
//!
//! Gram matrices are stored without any `1/n` normalization.

use std::path::{Path, PathBuf};

use faer::Mat;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{read_matrix_csv, write_matrix_csv, Dataset};
use crate::error::{param, Error, Result};
use crate::linalg::{self, center_symmetric, mirror_upper};

/// Largest point count for which the median heuristic uses all pairs.
pub const MEDIAN_SUBSAMPLE: usize = 2000;
/// Seed for the median-heuristic subsample.
pub const MEDIAN_SEED: u64 = 0x6d65_6469_616e;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `k(x, x') = x·x'`.
    Linear,
    /// `k(x, x') = exp(−γ‖x − x'‖²/2)`.
    Rbf { gamma: f64 },
    /// Gram matrix supplied from a file.
    Precomputed,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(param(
                format!("rbf bandwidth must be positive and finite, got {gamma}"),
            )),
            _ => Ok(()),
        }
    }

    /// Evaluates the kernel on a single pair of vectors.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match *self {
            KernelSpec::Linear => Ok(dot(a, b)),
            KernelSpec::Rbf { gamma } => Ok((-0.5 * gamma * sq_dist(a, b)).exp()),
            KernelSpec::Precomputed => Err(param("a precomputed kernel cannot be evaluated")),
        }
    }
}

/// A symmetric `n×n` Gram matrix with provenance flags.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Mat<f64>,
    centered: bool,
    weighted: bool,
}

impl GramMatrix {
    /// Wraps a raw (uncentered, unweighted) Gram matrix after validation.
    pub fn new(values: Mat<f64>) -> Result<Self> {
        Self::with_flags(values, false, false)
    }

    /// Wraps a Gram matrix with a declared status. Entries must be finite and
    /// symmetric within `1e-9`; the stored matrix is exactly symmetric.
    pub fn with_flags(values: Mat<f64>, centered: bool, weighted: bool) -> Result<Self> {
        linalg::check_square(&values)?;
        linalg::check_finite(&values)?;
        let asym = linalg::max_asymmetry(&values);
        if asym > 1e-9 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self {
            values: linalg::symmetrize(&values),
            centered,
            weighted,
        })
    }

    pub(crate) fn from_parts(values: Mat<f64>, centered: bool, weighted: bool) -> Self {
        Self {
            values,
            centered,
            weighted,
        }
    }

    pub fn values(&self) -> &Mat<f64> {
        &self.values
    }

    pub fn into_values(self) -> Mat<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    /// Copy multiplied by a constant; flags are kept.
    pub fn scaled(&self, c: f64) -> GramMatrix {
        let values = Mat::from_fn(self.n(), self.n(), |i, j| c * self.values[(i, j)]);
        GramMatrix { values, ..*self }
    }

    /// Writes the matrix as header-free CSV plus a `{"centered","weighted"}` sidecar.
    pub fn save(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        write_matrix_csv(csv_path, &self.values)?;
        let flags = GramFlags {
            centered: self.centered,
            weighted: self.weighted,
        };
        std::fs::write(
            sidecar_path(csv_path),
            serde_json::to_string_pretty(&flags)?,
        )?;
        Ok(())
    }

    /// Loads a precomputed Gram matrix and its sidecar flags.
    pub fn load(csv_path: impl AsRef<Path>) -> Result<Self> {
        let csv_path = csv_path.as_ref();
        let values = read_matrix_csv(csv_path)?;
        let side = sidecar_path(csv_path);
        let text = std::fs::read_to_string(&side)
            .map_err(|e| Error::from(e).context(format!("reading {}", side.display())))?;
        let flags: GramFlags = serde_json::from_str(&text)?;
        Self::with_flags(values, flags.centered, flags.weighted)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GramFlags {
    centered: bool,
    weighted: bool,
}

/// `gram.csv` → `gram.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Diagonal of the weight matrix `P`; all entries finite and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(param(format!(
                "weight {i} is {} (must be finite and > 0)",
                entries[i]
            )));
        }
        Ok(Self(entries))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_uniform_one(&self) -> bool {
        self.0.iter().all(|&w| w == 1.0)
    }

    /// Entrywise power.
    pub fn powf(&self, e: f64) -> WeightVector {
        WeightVector(self.0.iter().map(|w| w.powf(e)).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn rows_of(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Builds the raw Gram matrix `G_ij = k(x_i, x_j)`, exactly symmetric.
pub fn gram(x: &Dataset, spec: KernelSpec) -> Result<GramMatrix> {
    spec.validate()?;
    if matches!(spec, KernelSpec::Precomputed) {
        return Err(param(
            "precomputed Gram matrices are loaded from file, not built",
        ));
    }
    if x.n() < 2 {
        return Err(param(format!("need at least 2 samples, got {}", x.n())));
    }
    x.check_finite()?;
    let rows = rows_of(x.values());
    let n = rows.len();
    let mut g = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = if i == j && matches!(spec, KernelSpec::Rbf { .. }) {
                1.0
            } else {
                spec.eval(&rows[i], &rows[j])?
            };
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(GramMatrix::from_parts(g, false, false))
}

/// Kernel evaluations between new points (rows of `x_new`) and training
/// points, an `m×n` matrix.
pub fn cross_gram(x_new: &Dataset, x_train: &Dataset, spec: KernelSpec) -> Result<Mat<f64>> {
    spec.validate()?;
    if x_new.dim() != x_train.dim() {
        return Err(Error::DimensionMismatch(format!(
            "new points have dimension {}, training points {}",
            x_new.dim(),
            x_train.dim()
        )));
    }
    x_new.check_finite()?;
    let a = rows_of(x_new.values());
    let b = rows_of(x_train.values());
    let mut out = Mat::zeros(a.len(), b.len());
    for (i, ra) in a.iter().enumerate() {
        for (j, rb) in b.iter().enumerate() {
            out[(i, j)] = spec.eval(ra, rb)?;
        }
    }
    Ok(out)
}

/// Median-heuristic RBF bandwidth `γ = 1/m²`, `m` the median pairwise distance.
pub fn median_bandwidth(x: &Dataset) -> Result<f64> {
    median_bandwidth_seeded(x, MEDIAN_SEED)
}

/// As [`median_bandwidth`], with an explicit seed for the subsample drawn when
/// `n > 2000`.
pub fn median_bandwidth_seeded(x: &Dataset, seed: u64) -> Result<f64> {
    let m = median_pairwise_distance(x, seed)?;
    if m <= 0.0 {
        return Err(Error::DegenerateData(
            "median pairwise distance is zero".into(),
        ));
    }
    Ok(1.0 / (m * m))
}

/// Median Euclidean distance over distinct pairs; an even count averages the
/// two middle values.
pub fn median_pairwise_distance(x: &Dataset, seed: u64) -> Result<f64> {
    if x.n() < 2 {
        return Err(param(format!("need at least 2 samples, got {}", x.n())));
    }
    x.check_finite()?;
    let subset: Vec<usize> = if x.n() > MEDIAN_SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, x.n(), MEDIAN_SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..x.n()).collect()
    };
    let rows = rows_of(x.select_rows(&subset).values());
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for j in 0..rows.len() {
        for i in 0..j {
            d.push(sq_dist(&rows[i], &rows[j]).sqrt());
        }
    }
    Ok(median(&mut d))
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    let len = v.len();
    let mid = len / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Returns `P·H·G·H·P`. Centering is skipped when `g` is already centered.
pub fn weighted_center(g: &GramMatrix, p: &WeightVector) -> Result<GramMatrix> {
    if g.is_weighted() {
        return Err(param("Gram matrix is already weighted"));
    }
    if p.len() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for a {}x{} Gram matrix",
            p.len(),
            g.n(),
            g.n()
        )));
    }
    let centered = if g.is_centered() {
        g.values().clone()
    } else {
        center_symmetric(g.values())
    };
    let w = p.entries();
    let mut values = Mat::from_fn(g.n(), g.n(), |i, j| w[i] * centered[(i, j)] * w[j]);
    mirror_upper(&mut values);
    Ok(GramMatrix::from_parts(values, true, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{double_center, sym_eig};
    use rand::Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_kernel_on_orthonormal_points() {
        let x = Dataset::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = gram(&x, KernelSpec::Linear).unwrap();
        assert_eq!(g.values()[(0, 0)], 1.0);
        assert_eq!(g.values()[(0, 1)], 0.0);
        assert_eq!(g.values()[(1, 1)], 1.0);
        assert!(!g.is_centered() && !g.is_weighted());
    }

    #[test]
    fn rbf_direct_value_and_unit_diagonal() {
        let x = Dataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let g = gram(&x, KernelSpec::Rbf { gamma: 1.0 }).unwrap();
        assert!((g.values()[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(g.values()[(1, 2)], 1.0);
        for i in 0..3 {
            assert_eq!(g.values()[(i, i)], 1.0);
        }
    }

    #[test]
    fn rbf_rejects_bad_bandwidth_and_precomputed() {
        let x = random_dataset(4, 2, 0);
        assert!(gram(&x, KernelSpec::Rbf { gamma: 0.0 }).is_err());
        assert!(gram(&x, KernelSpec::Precomputed).is_err());
        let bad = Dataset::from_rows(&[vec![f64::NAN], vec![1.0]]).unwrap();
        assert!(matches!(
            gram(&bad, KernelSpec::Linear),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn median_small_cases() {
        let two = Dataset::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert!((median_bandwidth(&two).unwrap() - 0.25).abs() < 1e-15);
        let three = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!((median_bandwidth(&three).unwrap() - 1.0).abs() < 1e-15);
        let same = Dataset::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            median_bandwidth(&same),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn median_matches_sorted_oracle() {
        let x = random_dataset(500, 3, 4);
        let rows = rows_of(x.values());
        let mut all = Vec::new();
        for i in 0..500 {
            for j in (i + 1)..500 {
                all.push(sq_dist(&rows[i], &rows[j]).sqrt());
            }
        }
        all.sort_by(f64::total_cmp);
        let l = all.len();
        let want = if l % 2 == 1 {
            all[l / 2]
        } else {
            0.5 * (all[l / 2 - 1] + all[l / 2])
        };
        let got = median_pairwise_distance(&x, 0).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn median_subsample_is_deterministic() {
        let x = random_dataset(2100, 2, 8);
        let a = median_bandwidth_seeded(&x, 1).unwrap();
        let b = median_bandwidth_seeded(&x, 1).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn unit_weights_equal_double_centering_bitwise() {
        let x = random_dataset(7, 3, 2);
        let g = gram(&x, KernelSpec::Rbf { gamma: 0.7 }).unwrap();
        let a = weighted_center(&g, &WeightVector::ones(7)).unwrap();
        let b = double_center(&g).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(a.values()[(i, j)].to_bits(), b.values()[(i, j)].to_bits());
            }
        }
        assert!(a.is_centered() && a.is_weighted());
    }

    #[test]
    fn weighted_center_matches_explicit_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = Mat::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let g = GramMatrix::new(linalg::symmetrize(&(&a + a.transpose()))).unwrap();
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(0.2..2.0)).collect();
        let got = weighted_center(&g, &WeightVector::new(w.clone()).unwrap()).unwrap();
        let h = Mat::from_fn(6, 6, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / 6.0);
        let p = Mat::from_fn(6, 6, |i, j| if i == j { w[i] } else { 0.0 });
        let want = &p * &h * g.values() * &h * &p;
        assert!((got.values() - &want).norm_l2() < 1e-12 * want.norm_l2());
    }

    #[test]
    fn weighted_center_rejects_mismatch_and_rewighting() {
        let g = GramMatrix::new(Mat::identity(3, 3)).unwrap();
        assert!(matches!(
            weighted_center(&g, &WeightVector::ones(2)),
            Err(Error::DimensionMismatch(_))
        ));
        let w = weighted_center(&g, &WeightVector::ones(3)).unwrap();
        assert!(weighted_center(&w, &WeightVector::ones(3)).is_err());
        assert!(WeightVector::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn linear_kernel_pca_matches_covariance_spectrum() {
        let x = random_dataset(30, 4, 3);
        let n = 30.0;
        let c = double_center(&gram(&x, KernelSpec::Linear).unwrap()).unwrap();
        let kern = sym_eig(&Mat::from_fn(30, 30, |i, j| c.values()[(i, j)] / n)).unwrap();
        let xc = x.centered();
        let cov = xc.values().transpose() * xc.values();
        let cov = Mat::from_fn(4, 4, |i, j| cov[(i, j)] / n);
        let lin = sym_eig(&linalg::symmetrize(&cov)).unwrap();
        for i in 0..4 {
            assert!((kern.eigenvalues[i] - lin.eigenvalues[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn precomputed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let g = weighted_center(
            &gram(&random_dataset(5, 2, 1), KernelSpec::Linear).unwrap(),
            &WeightVector::ones(5),
        )
        .unwrap();
        g.save(&p).unwrap();
        let back = GramMatrix::load(&p).unwrap();
        assert_eq!(back, g);
    }
}
