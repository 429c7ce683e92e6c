//! Dense row-major matrices in 64-bit precision.

use serde::{Deserialize, Serialize};

use crate::error::{MirageError, Result};

/// Dense row-major matrix. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(MirageError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows.saturating_mul(cols),
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MirageError::NonFinite(format!(
                "entry ({}, {}) is {}",
                pos / cols.max(1),
                pos % cols.max(1),
                data[pos]
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MirageError::DimensionMismatch("ragged rows".into()));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix from a closure evaluated at every `(row, col)`.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Standard product `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(MirageError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        Matrix::new(self.rows, other.cols, out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(MirageError::DimensionMismatch(format!(
                "cannot form AᵀB with A {}x{} and B {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.cols * other.cols];
        for r in 0..self.rows {
            let b_row = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, b_row, &mut out[i * other.cols..(i + 1) * other.cols]);
            }
        }
        Matrix::new(self.cols, other.cols, out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        if self.rows == 0 {
            return means;
        }
        for i in 0..self.rows {
            for (m, v) in means.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Unbiased (n−1) per-column variances around the column means.
    pub fn column_variances(&self) -> Vec<f64> {
        let means = self.column_means();
        let mut vars = vec![0.0; self.cols];
        if self.rows < 2 {
            return vars;
        }
        for i in 0..self.rows {
            for ((v, x), m) in vars.iter_mut().zip(self.row(i)).zip(&means) {
                let d = x - m;
                *v += d * d;
            }
        }
        let denom = (self.rows - 1) as f64;
        vars.iter_mut().for_each(|v| *v /= denom);
        vars
    }

    /// Subtracts each column's mean from that column.
    pub fn column_center(&self) -> Matrix {
        let means = self.column_means();
        let mut out = self.clone();
        for i in 0..out.rows {
            let cols = out.cols;
            for (x, m) in out.data[i * cols..(i + 1) * cols].iter_mut().zip(&means) {
                *x -= m;
            }
        }
        out
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, alpha: f64) -> Result<Matrix> {
        Matrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * alpha).collect(),
        )
    }

    /// Adds `offset` to every row.
    pub fn add_row_vector(&self, offset: &[f64]) -> Result<Matrix> {
        if offset.len() != self.cols {
            return Err(MirageError::DimensionMismatch(format!(
                "offset length {} for {} columns",
                offset.len(),
                self.cols
            )));
        }
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.cols.max(1)) {
            for (x, o) in row.iter_mut().zip(offset) {
                *x += o;
            }
        }
        Matrix::new(self.rows, self.cols, data)
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hstack(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if parts.iter().any(|m| m.rows != rows) {
            return Err(MirageError::DimensionMismatch(
                "hstack row counts differ".into(),
            ));
        }
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for m in parts {
                data.extend_from_slice(m.row(i));
            }
        }
        Ok(Matrix { rows, cols, data })
    }
}

/// Dot product with eight independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = X w`, four rows per pass over `w`.
pub fn matvec(x: &Matrix, w: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.cols, w.len());
    debug_assert_eq!(x.rows, out.len());
    let d = x.cols;
    let blocks = x.data.chunks_exact(4 * d);
    let tail_start = blocks.len() * 4;
    for (b, block) in blocks.enumerate() {
        let (r0, rest) = block.split_at(d);
        let (r1, rest) = rest.split_at(d);
        let (r2, r3) = rest.split_at(d);
        let mut acc = [[0.0f64; 4]; 4];
        let chunks = d / 4 * 4;
        for j in (0..chunks).step_by(4) {
            for k in 0..4 {
                let wk = w[j + k];
                acc[0][k] += r0[j + k] * wk;
                acc[1][k] += r1[j + k] * wk;
                acc[2][k] += r2[j + k] * wk;
                acc[3][k] += r3[j + k] * wk;
            }
        }
        for (r, (row, a)) in [r0, r1, r2, r3].iter().zip(acc).enumerate() {
            let tail: f64 = (chunks..d).map(|j| row[j] * w[j]).sum();
            out[4 * b + r] = (a[0] + a[1]) + (a[2] + a[3]) + tail;
        }
    }
    for i in tail_start..x.rows {
        out[i] = dot(x.row(i), w);
    }
}

/// `out = Xᵀ v`, walking `X` row-major four rows at a time.
pub fn t_matvec(x: &Matrix, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.rows, v.len());
    debug_assert_eq!(x.cols, out.len());
    out.iter_mut().for_each(|o| *o = 0.0);
    let d = x.cols;
    let blocks = x.data.chunks_exact(4 * d);
    let tail_start = blocks.len() * 4;
    for (b, block) in blocks.enumerate() {
        let (r0, rest) = block.split_at(d);
        let (r1, rest) = rest.split_at(d);
        let (r2, r3) = rest.split_at(d);
        let (v0, v1, v2, v3) = (v[4 * b], v[4 * b + 1], v[4 * b + 2], v[4 * b + 3]);
        for j in 0..d {
            out[j] += (v0 * r0[j] + v1 * r1[j]) + (v2 * r2[j] + v3 * r3[j]);
        }
    }
    for i in tail_start..x.rows {
        axpy(v[i], x.row(i), out);
    }
}

/// One pass over `X`: for each row `i`, `r_i = f(i, x_i·w)` and
/// `out = Σ r_i x_i`. Equivalent to `matvec`, a map, then `t_matvec`, while
/// reading each row once.
pub fn fused_row_map(x: &Matrix, w: &[f64], mut f: impl FnMut(usize, f64) -> f64, out: &mut [f64]) {
    debug_assert_eq!(x.cols, w.len());
    debug_assert_eq!(x.cols, out.len());
    out.iter_mut().for_each(|o| *o = 0.0);
    let d = x.cols;
    let blocks = x.data.chunks_exact(4 * d);
    let tail_start = blocks.len() * 4;
    let chunks = d / 4 * 4;
    for (b, block) in blocks.enumerate() {
        let (r0, rest) = block.split_at(d);
        let (r1, rest) = rest.split_at(d);
        let (r2, r3) = rest.split_at(d);
        let mut acc = [[0.0f64; 4]; 4];
        for j in (0..chunks).step_by(4) {
            for k in 0..4 {
                let wk = w[j + k];
                acc[0][k] += r0[j + k] * wk;
                acc[1][k] += r1[j + k] * wk;
                acc[2][k] += r2[j + k] * wk;
                acc[3][k] += r3[j + k] * wk;
            }
        }
        let mut v = [0.0f64; 4];
        for (r, (row, a)) in [r0, r1, r2, r3].iter().zip(acc).enumerate() {
            let tail: f64 = (chunks..d).map(|j| row[j] * w[j]).sum();
            v[r] = f(4 * b + r, (a[0] + a[1]) + (a[2] + a[3]) + tail);
        }
        for j in 0..d {
            out[j] += (v[0] * r0[j] + v[1] * r1[j]) + (v[2] * r2[j] + v[3] * r3[j]);
        }
    }
    for i in tail_start..x.rows {
        let r = f(i, dot(x.row(i), w));
        axpy(r, x.row(i), out);
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.normal()).unwrap()
    }

    #[test]
    fn matvec_matches_row_dots() {
        let mut rng = Rng::new(45);
        for (rows, cols) in [(1, 3), (4, 8), (9, 7), (12, 16)] {
            let x = random(rows, cols, &mut rng);
            let w: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
            let mut out = vec![0.0; rows];
            matvec(&x, &w, &mut out);
            for i in 0..rows {
                assert!((out[i] - dot(x.row(i), &w)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn t_matvec_matches_transpose() {
        let mut rng = Rng::new(44);
        for rows in [1, 3, 4, 9] {
            let x = random(rows, 5, &mut rng);
            let v: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
            let mut out = vec![1.0; 5];
            t_matvec(&x, &v, &mut out);
            let xt = x.transpose();
            for j in 0..5 {
                assert!((out[j] - dot(xt.row(j), &v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fused_row_map_matches_two_passes() {
        let mut rng = Rng::new(46);
        for (rows, cols) in [(1, 3), (4, 8), (9, 7), (13, 16)] {
            let x = random(rows, cols, &mut rng);
            let w: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
            let map = |i: usize, z: f64| (z + i as f64).tanh();
            let mut z = vec![0.0; rows];
            matvec(&x, &w, &mut z);
            let r: Vec<f64> = z.iter().enumerate().map(|(i, &v)| map(i, v)).collect();
            let mut expected = vec![0.0; cols];
            t_matvec(&x, &r, &mut expected);
            let mut seen = Vec::new();
            let mut out = vec![7.0; cols];
            fused_row_map(
                &x,
                &w,
                |i, v| {
                    seen.push(i);
                    map(i, v)
                },
                &mut out,
            );
            assert_eq!(out, expected);
            seen.sort_unstable();
            assert_eq!(seen, (0..rows).collect::<Vec<_>>());
        }
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; a.rows() * b.cols()];
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                for k in 0..a.cols() {
                    out[i * b.cols() + j] += a.get(i, k) * b.get(k, j);
                }
            }
        }
        out
    }

    #[test]
    fn identity_product_is_noop() {
        let mut rng = Rng::new(3);
        let m = random(2, 5, &mut rng);
        assert_eq!(Matrix::identity(2).matmul(&m).unwrap(), m);
    }

    #[test]
    fn hand_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = Rng::new(11);
        let a = random(5, 7, &mut rng);
        let b = random(7, 3, &mut rng);
        let fast = a.matmul(&b).unwrap();
        for (x, y) in fast.data().iter().zip(naive_matmul(&a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
        let t = a.transpose().t_matmul(&b).unwrap();
        for (x, y) in t.data().iter().zip(fast.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&a),
            Err(MirageError::DimensionMismatch(_))
        ));
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            Matrix::new(1, 1, vec![f64::NAN]),
            Err(MirageError::NonFinite(_))
        ));
    }

    #[test]
    fn frobenius_cases() {
        assert_eq!(Matrix::zeros(3, 3).frobenius_norm(), 0.0);
        let m = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.frobenius_norm(), 5.0);
        let mut rng = Rng::new(5);
        let r = random(4, 4, &mut rng);
        let oracle: f64 = r.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((r.frobenius_norm() - oracle).abs() < 1e-12);
    }

    #[test]
    fn centering_cases() {
        let c = Matrix::new(3, 2, vec![2.5; 6]).unwrap().column_center();
        assert!(c.data().iter().all(|v| *v == 0.0));
        let m = Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(m.column_center().data(), &[-1.0, 1.0]);
        let mut rng = Rng::new(8);
        let r = random(6, 3, &mut rng)
            .add_row_vector(&[5.0, -2.0, 100.0])
            .unwrap();
        for m in r.column_center().column_means() {
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn associativity_and_idempotent_centering() {
        let mut rng = Rng::new(21);
        for _ in 0..10 {
            let a = random(3, 4, &mut rng);
            let b = random(4, 5, &mut rng);
            let c = random(5, 2, &mut rng);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.frobenius_norm().max(1.0);
            for (x, y) in left.data().iter().zip(right.data()) {
                assert!((x - y).abs() / scale < 1e-9);
            }
            let once = a.column_center();
            let twice = once.column_center();
            for (x, y) in once.data().iter().zip(twice.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hstack_and_select() {
        let a = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let h = Matrix::hstack(&[&a, &b]).unwrap();
        assert_eq!(h.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert_eq!(h.select_rows(&[1]).data(), &[2.0, 5.0, 6.0]);
    }
}
