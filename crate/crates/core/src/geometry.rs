//! Probe-free structural diagnostics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MirageError, Result};
use crate::linalg::{dot, squared_distance, Matrix};
use crate::rng::Rng;
use crate::stats::std_normal_cdf;

/// Default number of rows used for CKA.
pub const DEFAULT_CKA_SAMPLE_CAP: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaResult {
    pub value: f64,
    pub n_samples_used: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityResult {
    pub score: f64,
    pub mean_gap_sq: f64,
    pub trace_sum: f64,
    pub n_u: usize,
    pub n_r: usize,
}

/// Linear CKA between two representations of the same inputs.
///
/// When there are more than `sample_cap` rows, the same seeded subset of
/// rows is taken from both matrices. Columns are centered before computing
/// `‖YᵀX‖²_F / (‖XᵀX‖_F · ‖YᵀY‖_F)`.
pub fn linear_cka(x: &Matrix, y: &Matrix, sample_cap: usize, seed: u64) -> Result<CkaResult> {
    if x.rows() != y.rows() {
        return Err(MirageError::DimensionMismatch(format!(
            "CKA inputs have {} and {} rows",
            x.rows(),
            y.rows()
        )));
    }
    if x.rows() < 2 {
        return Err(MirageError::InvalidInput(
            "CKA needs at least two rows".into(),
        ));
    }
    let (xs, ys);
    let (x, y) = if sample_cap >= 2 && x.rows() > sample_cap {
        let mut rows = Rng::new(seed).sample_indices(x.rows(), sample_cap);
        rows.sort_unstable();
        xs = x.select_rows(&rows);
        ys = y.select_rows(&rows);
        (&xs, &ys)
    } else {
        (x, y)
    };
    let xc = x.column_center();
    let yc = y.column_center();
    let xx = xc.t_matmul(&xc)?.frobenius_norm();
    let yy = yc.t_matmul(&yc)?.frobenius_norm();
    let denom = xx * yy;
    if !(denom > 0.0) {
        return Err(MirageError::Undefined(
            "CKA is undefined for constant features".into(),
        ));
    }
    let cross = yc.t_matmul(&xc)?.frobenius_norm();
    Ok(CkaResult {
        value: cross * cross / denom,
        n_samples_used: x.rows(),
        seed,
    })
}

/// Fisher-style separability `‖μ_u − μ_r‖² / (tr Σ_u + tr Σ_r)`.
///
/// Retained rows are subsampled without replacement to the forgotten count
/// when there are more of them. Covariance traces use the n−1 denominator.
pub fn separability(
    forgotten: &Matrix,
    retained: &Matrix,
    seed: u64,
) -> Result<SeparabilityResult> {
    if forgotten.cols() != retained.cols() {
        return Err(MirageError::DimensionMismatch(
            "separability inputs differ in width".into(),
        ));
    }
    if forgotten.rows() < 2 || retained.rows() < 2 {
        return Err(MirageError::InvalidInput(
            "separability needs at least two rows per group".into(),
        ));
    }
    let sampled;
    let retained = if retained.rows() > forgotten.rows() {
        let mut rows = Rng::new(seed).sample_indices(retained.rows(), forgotten.rows());
        rows.sort_unstable();
        sampled = retained.select_rows(&rows);
        &sampled
    } else {
        retained
    };
    let mean_gap_sq = squared_distance(&forgotten.column_means(), &retained.column_means());
    let trace_sum: f64 = forgotten.column_variances().iter().sum::<f64>()
        + retained.column_variances().iter().sum::<f64>();
    if !(trace_sum > 0.0) {
        return Err(MirageError::Undefined(
            "separability is undefined when all points coincide".into(),
        ));
    }
    Ok(SeparabilityResult {
        score: mean_gap_sq / trace_sum,
        mean_gap_sq,
        trace_sum,
        n_u: forgotten.rows(),
        n_r: retained.rows(),
    })
}

/// `‖μ_u − μ_r‖² / σ²`
pub fn snr(mu_u: &[f64], mu_r: &[f64], sigma: f64) -> Result<f64> {
    if mu_u.len() != mu_r.len() {
        return Err(MirageError::DimensionMismatch(
            "mean vectors differ in length".into(),
        ));
    }
    if !(sigma > 0.0) {
        return Err(MirageError::InvalidInput("sigma must be positive".into()));
    }
    Ok(squared_distance(mu_u, mu_r) / (sigma * sigma))
}

/// Accuracy guaranteed for the optimal linear classifier between two
/// isotropic Gaussians with equal priors: `Φ(√snr / 2)`.
pub fn probe_accuracy_lower_bound(snr: f64) -> f64 {
    std_normal_cdf(snr.max(0.0).sqrt() / 2.0)
}

const PCA_SEED: u64 = 0x5ca_2d;
const PCA_TOL: f64 = 1e-9;
const PCA_MAX_ITERS: usize = 20_000;

fn matvec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows()).map(|i| dot(m.row(i), v)).collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orthogonalize(v: &mut [f64], against: &[f64]) {
    let p = dot(v, against);
    v.iter_mut().zip(against).for_each(|(x, a)| *x -= p * a);
}

/// Leading eigenvector of a PSD matrix by power iteration, kept orthogonal
/// to `deflate` when given.
fn power_iteration(cov: &Matrix, deflate: Option<&[f64]>, rng: &mut Rng) -> (Vec<f64>, f64) {
    let mut v: Vec<f64> = (0..cov.rows()).map(|_| rng.normal()).collect();
    if let Some(a) = deflate {
        orthogonalize(&mut v, a);
    }
    normalize(&mut v);
    for _ in 0..PCA_MAX_ITERS {
        let mut next = matvec(cov, &v);
        if let Some(a) = deflate {
            orthogonalize(&mut next, a);
        }
        if normalize(&mut next) == 0.0 {
            return (v, 0.0);
        }
        let change = squared_distance(&next, &v).sqrt();
        v = next;
        if change < PCA_TOL {
            break;
        }
    }
    let lambda = dot(&v, &matvec(cov, &v));
    (v, lambda)
}

/// Projection of the centered rows onto the top two principal axes.
///
/// Power iteration with deflation (start vectors from a fixed seed,
/// convergence tolerance 1e-9 on the iterate).
pub fn pca2(features: &Matrix) -> Result<Matrix> {
    if features.cols() < 2 || features.rows() < 3 {
        return Err(MirageError::InvalidInput(
            "PCA needs at least 3 rows and 2 columns".into(),
        ));
    }
    let centered = features.column_center();
    let cov = centered
        .t_matmul(&centered)?
        .scale(1.0 / (features.rows() - 1) as f64)?;
    let mut rng = Rng::new(PCA_SEED);
    let (v1, l1) = power_iteration(&cov, None, &mut rng);
    let (v2, l2) = power_iteration(&cov, Some(&v1), &mut rng);
    let total: f64 = (0..cov.rows()).map(|i| cov.get(i, i)).sum();
    if !(l1 > 0.0) || l2 <= 1e-12 * total.max(f64::MIN_POSITIVE) {
        return Err(MirageError::Degenerate(
            "data has rank below 2 after centering".into(),
        ));
    }
    let mut out = Vec::with_capacity(features.rows() * 2);
    for i in 0..centered.rows() {
        let r = centered.row(i);
        out.push(dot(r, &v1));
        out.push(dot(r, &v2));
    }
    Matrix::new(features.rows(), 2, out)
}

/// Writes a projection as `x,y,label,is_forgotten` CSV.
pub fn write_projection_csv(
    path: &Path,
    projection: &Matrix,
    labels: &[u32],
    forgotten: &[bool],
) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| MirageError::format(path, e.to_string()))?;
    let to_err = |e: csv::Error| MirageError::format(path, e.to_string());
    w.write_record(["x", "y", "label", "is_forgotten"])
        .map_err(to_err)?;
    for i in 0..projection.rows() {
        w.write_record([
            format!("{:.6}", projection.get(i, 0)),
            format!("{:.6}", projection.get(i, 1)),
            labels[i].to_string(),
            (forgotten[i] as u8).to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| MirageError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize, d: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_fn(n, d, |_, _| rng.normal()).unwrap()
    }

    /// Random orthogonal matrix from Gram–Schmidt on Gaussian columns.
    fn random_orthogonal(d: usize, rng: &mut Rng) -> Matrix {
        let mut cols: Vec<Vec<f64>> = Vec::new();
        while cols.len() < d {
            let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            for c in &cols {
                orthogonalize(&mut v, c);
            }
            if normalize(&mut v) > 1e-6 {
                cols.push(v);
            }
        }
        Matrix::from_fn(d, d, |i, j| cols[j][i]).unwrap()
    }

    #[test]
    fn cka_self_scale_rotation() {
        let mut rng = Rng::new(1);
        let x = gaussian(200, 6, &mut rng);
        assert!((linear_cka(&x, &x, 5000, 0).unwrap().value - 1.0).abs() < 1e-9);
        let q = random_orthogonal(6, &mut rng);
        let xq = x.matmul(&q).unwrap();
        assert!((linear_cka(&x, &xq, 5000, 0).unwrap().value - 1.0).abs() < 1e-9);
        let x3 = x.scale(3.0).unwrap();
        assert!((linear_cka(&x, &x3, 5000, 0).unwrap().value - 1.0).abs() < 1e-9);
        let shifted = x.add_row_vector(&[5.0; 6]).unwrap();
        assert!((linear_cka(&x, &shifted, 5000, 0).unwrap().value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cka_errors() {
        let x = Matrix::zeros(5, 2);
        let mut rng = Rng::new(2);
        let y = gaussian(5, 2, &mut rng);
        assert!(matches!(
            linear_cka(&x, &y, 10, 0),
            Err(MirageError::Undefined(_))
        ));
        assert!(linear_cka(&y, &gaussian(4, 2, &mut rng), 10, 0).is_err());
    }

    #[test]
    fn cka_subsamples_aligned_rows() {
        let mut rng = Rng::new(3);
        let x = gaussian(300, 4, &mut rng);
        let r = linear_cka(&x, &x, 100, 9).unwrap();
        assert_eq!(r.n_samples_used, 100);
        assert!((r.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn separability_zero_gap() {
        let mut rng = Rng::new(4);
        let x = gaussian(50, 3, &mut rng);
        let r = separability(&x, &x, 0).unwrap();
        assert_eq!(r.mean_gap_sq, 0.0);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn separability_matches_snr_identity() {
        let mut rng = Rng::new(5);
        let (d, sigma, gap) = (8, 1.5, 3.0);
        let u = Matrix::from_fn(20_000, d, |_, j| {
            sigma * rng.normal() + if j == 0 { gap } else { 0.0 }
        })
        .unwrap();
        let r = Matrix::from_fn(20_000, d, |_, _| sigma * rng.normal()).unwrap();
        let s = separability(&u, &r, 1).unwrap();
        let expected = gap * gap / (2.0 * d as f64 * sigma * sigma);
        assert!(
            (s.score / expected - 1.0).abs() < 0.1,
            "{} vs {expected}",
            s.score
        );
        assert!((s.score - s.mean_gap_sq / s.trace_sum).abs() < 1e-12);
    }

    #[test]
    fn separability_balances_and_rejects_points() {
        let mut rng = Rng::new(6);
        let u = gaussian(10, 2, &mut rng);
        let r = gaussian(100, 2, &mut rng);
        assert_eq!(separability(&u, &r, 3).unwrap().n_r, 10);
        let same = Matrix::new(3, 2, vec![1.0; 6]).unwrap();
        assert!(matches!(
            separability(&same, &same, 0),
            Err(MirageError::Undefined(_))
        ));
    }

    #[test]
    fn snr_cases() {
        assert_eq!(snr(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap(), 0.0);
        assert_eq!(snr(&[2.0], &[0.0], 1.0).unwrap(), 4.0);
        assert!(snr(&[1.0], &[0.0], 0.0).is_err());
        let mut rng = Rng::new(7);
        let a: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
        let oracle: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / 0.25;
        assert!((snr(&a, &b, 0.5).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_cases() {
        assert_eq!(probe_accuracy_lower_bound(0.0), 0.5);
        assert!((probe_accuracy_lower_bound(4.0) - 0.841_344_7).abs() < 1e-6);
        assert!((probe_accuracy_lower_bound(1e6) - 1.0).abs() < 1e-12);
        let mut prev = 0.0;
        for k in 0..200 {
            let b = probe_accuracy_lower_bound(k as f64 * 0.25);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn pca_of_planar_data_is_isometric() {
        let mut rng = Rng::new(8);
        let x = Matrix::from_fn(40, 2, |_, j| rng.normal() * if j == 0 { 3.0 } else { 1.0 })
            .unwrap()
            .column_center();
        let p = pca2(&x).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let a = squared_distance(x.row(i), x.row(j)).sqrt();
                let b = squared_distance(p.row(i), p.row(j)).sqrt();
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pca_rejects_rank_one() {
        let x = Matrix::from_fn(10, 3, |i, j| i as f64 * [1.0, 2.0, -1.0][j]).unwrap();
        assert!(matches!(pca2(&x), Err(MirageError::Degenerate(_))));
    }

    #[test]
    fn pca_matches_dense_eigendecomposition() {
        let mut rng = Rng::new(9);
        let scales = [4.0, 2.5, 1.0, 0.5, 0.2];
        let x = Matrix::from_fn(10, 5, |_, j| scales[j] * rng.normal()).unwrap();
        let p = pca2(&x).unwrap();
        let var = |col: usize| (0..10).map(|i| p.get(i, col).powi(2)).sum::<f64>() / 9.0;

        let c = x.column_center();
        let cov = c.t_matmul(&c).unwrap().scale(1.0 / 9.0).unwrap();
        let dense = nalgebra::DMatrix::from_row_slice(5, 5, cov.data());
        let mut eig: Vec<f64> = dense
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((var(0) - eig[0]).abs() < 1e-6 * eig[0]);
        assert!((var(1) - eig[1]).abs() < 1e-6 * eig[0]);
        assert!(var(0) >= var(1) && var(1) >= eig[2]);
        let cross: f64 = (0..10).map(|i| p.get(i, 0) * p.get(i, 1)).sum();
        assert!(cross.abs() < 1e-6 * var(0) * 9.0);
    }
}
