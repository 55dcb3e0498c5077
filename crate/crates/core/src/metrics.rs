//! Embedding and prediction quality measures.

use faer::Mat;

use crate::error::{param, Error, Result};
use crate::linalg::trunc_svd;

fn centered(m: &Mat<f64>) -> Mat<f64> {
    let n = m.nrows() as f64;
    let means: Vec<f64> = (0..m.ncols())
        .map(|j| m.col_as_slice(j).iter().sum::<f64>() / n)
        .collect();
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - means[j])
}

/// Relative Procrustes residual of `e` aligned onto `z`.
///
/// Both configurations are centered, `e` is rotated/reflected and scaled
/// isotropically onto `z`, and the RMS residual is divided by the RMS of
/// centered `z`. The result lies in `[0, 1]` and is invariant under
/// translation, orthogonal maps and positive scaling of either argument.
pub fn procrustes_error(e: &Mat<f64>, z: &Mat<f64>) -> Result<f64> {
    if e.nrows() != z.nrows() || e.ncols() != z.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "procrustes needs matching shapes, got {}x{} and {}x{}",
            e.nrows(),
            e.ncols(),
            z.nrows(),
            z.ncols()
        )));
    }
    if e.nrows() < 2 || e.ncols() == 0 {
        return Err(param("procrustes needs at least two points and one column"));
    }
    let (ec, zc) = (centered(e), centered(z));
    let (ee, zz) = (ec.squared_norm_l2(), zc.squared_norm_l2());
    if !(ee.is_finite() && zz.is_finite()) {
        return Err(Error::NonFinite);
    }
    if ee <= f64::MIN_POSITIVE || zz <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateData("zero-variance configuration".into()));
    }
    let svd = trunc_svd(&(ec.transpose() * &zc), ec.ncols())?;
    let rot = &svd.left_vectors * svd.right_vectors.transpose();
    let scale = svd.singular_values.iter().sum::<f64>() / ee;
    let resid = &ec * &rot * faer::Scale(scale) - &zc;
    Ok((resid.squared_norm_l2() / zz).sqrt())
}

/// Orthonormal basis of the column span, rejecting numerically rank-deficient input.
fn orthonormal_basis(m: &Mat<f64>, name: &str) -> Result<Mat<f64>> {
    let k = m.ncols();
    if k == 0 || m.nrows() < k {
        return Err(param(format!(
            "{name} must have at least one column and no more columns than rows"
        )));
    }
    let s = trunc_svd(m, k)?;
    let top = s.singular_values[0];
    if !(top > 0.0) || s.singular_values[k - 1] <= 1e-10 * top {
        return Err(Error::DegenerateData(format!("{name} is rank deficient")));
    }
    Ok(s.left_vectors)
}

/// Principal angles between `span(u)` and `span(m)`, ascending, in `[0, π/2]`.
///
/// Cosines come from the singular values of `Quᵀ·Qm`, sines from those of the
/// residual `Qu − Qm·Qmᵀ·Qu`; pairing them through `atan2` keeps small angles
/// accurate.
pub fn principal_angles(u: &Mat<f64>, m: &Mat<f64>) -> Result<Vec<f64>> {
    if u.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch(
            "bases live in different dimensions".into(),
        ));
    }
    let k = u.ncols();
    if k > m.ncols() {
        return Err(param("principal_angles needs k <= k'"));
    }
    let qu = orthonormal_basis(u, "u")?;
    let qm = orthonormal_basis(m, "m")?;
    let proj = qm.transpose() * &qu;
    let cos = trunc_svd(&proj, k)?.singular_values;
    let resid = &qu - &qm * &proj;
    let mut sin = trunc_svd(&resid, k)?.singular_values;
    sin.reverse();
    Ok(cos
        .iter()
        .zip(&sin)
        .map(|(c, s)| s.clamp(0.0, 1.0).atan2(c.clamp(0.0, 1.0)))
        .collect())
}

/// Root mean squared Euclidean row distance.
pub fn rmse(pred: &Mat<f64>, truth: &Mat<f64>) -> Result<f64> {
    if pred.nrows() != truth.nrows() || pred.ncols() != truth.ncols() {
        return Err(Error::DimensionMismatch(
            "rmse needs matching shapes".into(),
        ));
    }
    if pred.nrows() == 0 {
        return Err(param("rmse of zero rows"));
    }
    Ok(((pred - truth).squared_norm_l2() / pred.nrows() as f64).sqrt())
}

/// Ranks starting at 1, ties receive their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::DegenerateData(
            "constant sequence has no rank correlation".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::PairedLength {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(param("spearman needs at least two values"));
    }
    pearson(&ranks(a), &ranks(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, d: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    fn rotation(theta: f64) -> Mat<f64> {
        let (s, c) = theta.sin_cos();
        Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => c,
            (0, 1) => -s,
            _ => s,
        })
    }

    #[test]
    fn identity_has_zero_error() {
        let z = random(30, 2, 1);
        assert!(procrustes_error(&z, &z).unwrap() < 1e-10);
    }

    #[test]
    fn similarity_transform_is_invisible() {
        let z = random(40, 2, 2);
        let e = Mat::from_fn(40, 2, |i, j| {
            3.5 * (&z * rotation(0.7))[(i, j)] + [4.0, -2.0][j]
        });
        assert!(procrustes_error(&e, &z).unwrap() < 1e-10);
        let reflect = Mat::from_fn(40, 2, |i, j| if j == 0 { -z[(i, 0)] } else { z[(i, 1)] });
        assert!(procrustes_error(&reflect, &z).unwrap() < 1e-10);
    }

    #[test]
    fn matches_explicit_alignment() {
        let (e, z) = (random(50, 2, 3), random(50, 2, 4));
        let (ec, zc) = (centered(&e), centered(&z));
        // brute-force rotation angle and reflection, then closed-form scale
        let mut best = f64::INFINITY;
        for reflect in [false, true] {
            for step in 0..20000 {
                let r = rotation(step as f64 * std::f64::consts::TAU / 20000.0);
                let r = if reflect {
                    Mat::from_fn(2, 2, |i, j| if i == 0 { -r[(i, j)] } else { r[(i, j)] })
                } else {
                    r
                };
                let er = &ec * &r;
                let s = (0..50)
                    .map(|i| er[(i, 0)] * zc[(i, 0)] + er[(i, 1)] * zc[(i, 1)])
                    .sum::<f64>()
                    / er.squared_norm_l2();
                best = best.min((&er * faer::Scale(s) - &zc).squared_norm_l2());
            }
        }
        let oracle = (best / zc.squared_norm_l2()).sqrt();
        assert!((procrustes_error(&e, &z).unwrap() - oracle).abs() < 1e-6);
    }

    #[test]
    fn procrustes_rejects_bad_input() {
        assert!(procrustes_error(&random(5, 2, 0), &random(6, 2, 0)).is_err());
        assert!(procrustes_error(&Mat::from_fn(5, 2, |_, _| 1.0), &random(5, 2, 0)).is_err());
    }

    #[test]
    fn identical_subspaces_have_zero_angles() {
        let u = random(10, 3, 5);
        let m = &u * random(3, 3, 6);
        for a in principal_angles(&u, &m).unwrap() {
            assert!(a.abs() < 1e-10, "{a}");
        }
    }

    #[test]
    fn orthogonal_lines_are_perpendicular() {
        let u = Mat::from_fn(2, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let m = Mat::from_fn(2, 1, |i, _| if i == 1 { 2.0 } else { 0.0 });
        let a = principal_angles(&u, &m).unwrap();
        assert!((a[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn first_angle_matches_optimization_oracle() {
        let (u, m) = (random(10, 2, 7), random(10, 3, 8));
        let angles = principal_angles(&u, &m).unwrap();
        assert!(angles[0] <= angles[1]);
        let qm = orthonormal_basis(&m, "m").unwrap();
        let qu = orthonormal_basis(&u, "u").unwrap();
        // smallest angle: maximize the norm of the projection of unit vectors of span(u)
        let cos_at = |phi: f64| {
            let v = Mat::from_fn(10, 1, |i, _| {
                qu[(i, 0)] * phi.cos() + qu[(i, 1)] * phi.sin()
            });
            (qm.transpose() * &v).norm_l2()
        };
        let mut best = (0.0, 0.0);
        for s in 0..3600 {
            let phi = s as f64 * std::f64::consts::PI / 3600.0;
            let c = cos_at(phi);
            if c > best.1 {
                best = (phi, c);
            }
        }
        let (mut lo, mut hi) = (best.0 - 0.001, best.0 + 0.001);
        for _ in 0..100 {
            let (a, b) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
            if cos_at(a) < cos_at(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        let oracle = cos_at((lo + hi) / 2.0).min(1.0).acos();
        assert!(
            (angles[0] - oracle).abs() < 1e-10,
            "{} vs {oracle}",
            angles[0]
        );
    }

    #[test]
    fn rank_deficient_basis_rejected() {
        let u = Mat::from_fn(5, 2, |i, _| i as f64);
        assert!(principal_angles(&u, &random(5, 2, 0)).is_err());
        assert!(principal_angles(&random(5, 3, 0), &random(5, 2, 0)).is_err());
    }

    #[test]
    fn rmse_is_root_mean_row_distance() {
        let a = Mat::from_fn(2, 2, |_, _| 0.0);
        let b = Mat::from_fn(2, 2, |i, j| {
            if i == 0 && j == 0 {
                3.0
            } else if i == 0 {
                4.0
            } else {
                0.0
            }
        });
        assert!((rmse(&a, &b).unwrap() - (25.0f64 / 2.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn spearman_handles_monotone_maps_and_ties() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b: Vec<f64> = a.iter().map(|v: &f64| v.powi(3)).collect();
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((spearman(&a, &rev).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
