//! Dense real matrices with row-major storage and value semantics.
//!
//! Every numerical kernel in this crate goes through the routines here, so
//! summation order is fixed (ascending inner index) and results are
//! reproducible across runs independent of threading.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatError {
    #[error("{op}: dimension mismatch, lhs is {lhs_rows}x{lhs_cols}, rhs is {rhs_rows}x{rhs_cols}")]
    DimMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("factorization failed: non-positive pivot at index {pivot}")]
    FactorizationFailed { pivot: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
}

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatError> {
        if data.len() != rows * cols {
            return Err(MatError::BadShape {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    /// Like [`Mat::from_vec`] but additionally rejects NaN/inf entries.
    pub fn from_vec_finite(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatError> {
        let m = Mat::from_vec(rows, cols, data)?;
        if let Some(index) = m.data.iter().position(|v| !v.is_finite()) {
            return Err(MatError::NonFinite { index });
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(MatError::BadShape {
                    rows: r,
                    cols: c,
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Mat::from_vec(r, c, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    /// Column vector from a slice.
    pub fn col_vec(v: &[f64]) -> Self {
        Mat {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Reinterpret the row-major data under new dimensions.
    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Mat, MatError> {
        Mat::from_vec(rows, cols, self.data.clone())
    }

    pub fn add(&self, other: &Mat) -> Result<Mat, MatError> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat, MatError> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn elem_mul(&self, other: &Mat) -> Result<Mat, MatError> {
        self.zip_with("elem_mul", other, |a, b| a * b)
    }

    fn zip_with(
        &self,
        op: &'static str,
        other: &Mat,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Mat, MatError> {
        if self.shape() != other.shape() {
            return Err(MatError::DimMismatch {
                op,
                lhs_rows: self.rows,
                lhs_cols: self.cols,
                rhs_rows: other.rows,
                rhs_cols: other.cols,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Adds `v` to every diagonal entry in place.
    pub fn add_diag(&mut self, v: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += v;
        }
    }

    pub fn trace(&self) -> f64 {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Matrix product with deterministic summation order (inner index ascending).
pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat, MatError> {
    if a.cols != b.rows {
        return Err(MatError::DimMismatch {
            op: "matmul",
            lhs_rows: a.rows,
            lhs_cols: a.cols,
            rhs_rows: b.rows,
            rhs_cols: b.cols,
        });
    }
    let mut c = Mat::zeros(a.rows, b.cols);
    // i-k-j ordering keeps B accesses contiguous; per entry the accumulation
    // over k is still strictly ascending, matching the naive triple loop.
    for i in 0..a.rows {
        let crow = &mut c.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
    Ok(c)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(s: &Mat) -> Result<Mat, MatError> {
    if s.rows != s.cols {
        return Err(MatError::NotSquare {
            rows: s.rows,
            cols: s.cols,
        });
    }
    let n = s.rows;
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = s.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(MatError::FactorizationFailed { pivot: i });
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `S z = b` for each column of `b` given the Cholesky factor of `S`.
pub fn solve_with_factor(l: &Mat, b: &Mat) -> Result<Mat, MatError> {
    if l.rows != b.rows {
        return Err(MatError::DimMismatch {
            op: "solve_with_factor",
            lhs_rows: l.rows,
            lhs_cols: l.cols,
            rhs_rows: b.rows,
            rhs_cols: b.cols,
        });
    }
    let n = l.rows;
    let mut z = b.clone();
    for c in 0..b.cols {
        // forward: L w = b
        for i in 0..n {
            let mut sum = z.get(i, c);
            for k in 0..i {
                sum -= l.get(i, k) * z.get(k, c);
            }
            z.set(i, c, sum / l.get(i, i));
        }
        // backward: L^T x = w
        for i in (0..n).rev() {
            let mut sum = z.get(i, c);
            for k in i + 1..n {
                sum -= l.get(k, i) * z.get(k, c);
            }
            z.set(i, c, sum / l.get(i, i));
        }
    }
    Ok(z)
}

/// Solves `S z = b` for symmetric positive definite `S`.
pub fn solve_spd(s: &Mat, b: &Mat) -> Result<Mat, MatError> {
    let l = cholesky(s)?;
    solve_with_factor(&l, b)
}

/// Jitter added on a failed factorization: `1e-10 * trace(S) / dim`.
pub fn jitter_for(s: &Mat) -> f64 {
    let dim = s.rows.max(1) as f64;
    1e-10 * s.trace().abs() / dim + f64::MIN_POSITIVE
}

/// Cholesky with one jittered retry; the second failure is a hard error.
pub fn cholesky_jittered(s: &Mat) -> Result<Mat, MatError> {
    match cholesky(s) {
        Ok(l) => Ok(l),
        Err(MatError::FactorizationFailed { .. }) => {
            let mut sj = s.clone();
            sj.add_diag(jitter_for(s));
            cholesky(&sj)
        }
        Err(e) => Err(e),
    }
}

/// [`solve_spd`] with the jitter-and-retry policy applied.
pub fn solve_spd_jittered(s: &Mat, b: &Mat) -> Result<Mat, MatError> {
    let l = cholesky_jittered(s)?;
    solve_with_factor(&l, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn naive_matmul(a: &Mat, b: &Mat) -> Mat {
        let mut c = Mat::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut sum = 0.0;
                for k in 0..a.cols() {
                    sum += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, sum);
            }
        }
        c
    }

    /// Gauss-Jordan inverse with partial pivoting; test oracle only.
    fn gauss_jordan_inverse(s: &Mat) -> Mat {
        let n = s.rows();
        let mut aug = Mat::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug.set(i, j, s.get(i, j));
            }
            aug.set(i, n + i, 1.0);
        }
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if aug.get(r, col).abs() > aug.get(piv, col).abs() {
                    piv = r;
                }
            }
            if piv != col {
                for j in 0..2 * n {
                    let tmp = aug.get(col, j);
                    aug.set(col, j, aug.get(piv, j));
                    aug.set(piv, j, tmp);
                }
            }
            let d = aug.get(col, col);
            for j in 0..2 * n {
                aug.set(col, j, aug.get(col, j) / d);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = aug.get(r, col);
                for j in 0..2 * n {
                    aug.set(r, j, aug.get(r, j) - f * aug.get(col, j));
                }
            }
        }
        Mat::from_fn(n, n, |i, j| aug.get(i, n + j))
    }

    #[test]
    fn matmul_identity() {
        let i2 = Mat::identity(2);
        let v = Mat::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(matmul(&i2, &v).unwrap(), v);
    }

    #[test]
    fn matmul_direct() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Mat::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = Rng::new(11);
        let a = rng.gaussian(5, 3);
        let b = rng.gaussian(3, 4);
        let c = matmul(&a, &b).unwrap();
        let expect = naive_matmul(&a, &b);
        assert!(c.max_abs_diff(&expect) == 0.0, "summation order must match");
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(2, 3);
        assert!(matches!(
            matmul(&a, &b),
            Err(MatError::DimMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let i3 = Mat::identity(3);
        let b = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let z = solve_spd(&i3, &b).unwrap();
        assert!(z.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn solve_diagonal() {
        let s = Mat::from_vec(2, 2, vec![2.0, 0.0, 0.0, 4.0]).unwrap();
        let b = Mat::from_vec(2, 1, vec![2.0, 8.0]).unwrap();
        let z = solve_spd(&s, &b).unwrap();
        assert!((z.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((z.get(1, 0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn solve_matches_gauss_jordan_oracle() {
        let mut rng = Rng::new(3);
        let g = rng.gaussian(6, 6);
        let mut s = matmul(&g, &g.transpose()).unwrap();
        s.add_diag(1.0);
        let b = rng.gaussian(6, 2);
        let z = solve_spd(&s, &b).unwrap();
        let expect = matmul(&gauss_jordan_inverse(&s), &b).unwrap();
        assert!(z.max_abs_diff(&expect) <= 1e-10);
    }

    #[test]
    fn solve_residual_small() {
        let mut rng = Rng::new(17);
        let g = rng.gaussian(8, 8);
        let mut s = matmul(&g, &g.transpose()).unwrap();
        s.add_diag(0.5);
        let b = rng.gaussian(8, 3);
        let z = solve_spd(&s, &b).unwrap();
        let resid = matmul(&s, &z).unwrap().sub(&b).unwrap().frob_norm();
        assert!(resid <= 1e-9 * b.frob_norm());
    }

    #[test]
    fn solve_recovers_known_solution() {
        // condition number kept moderate; recovery to 1e-8 relative error
        let mut rng = Rng::new(23);
        let g = rng.gaussian(10, 10);
        let mut s = matmul(&g, &g.transpose()).unwrap();
        s.add_diag(1e-2);
        let z0 = rng.gaussian(10, 2);
        let b = matmul(&s, &z0).unwrap();
        let z = solve_spd(&s, &b).unwrap();
        assert!(z.sub(&z0).unwrap().frob_norm() <= 1e-8 * z0.frob_norm());
    }

    #[test]
    fn cholesky_fails_on_indefinite_then_jitter_policy() {
        let s = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap(); // eigenvalues 3, -1
        assert!(matches!(
            cholesky(&s),
            Err(MatError::FactorizationFailed { .. })
        ));
        // jitter of 1e-10*tr/dim cannot rescue a genuinely indefinite matrix
        assert!(cholesky_jittered(&s).is_err());
        // but a semidefinite matrix on the edge gets rescued
        let edge = Mat::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(cholesky_jittered(&edge).is_ok());
    }

    #[test]
    fn transpose_roundtrip() {
        let mut rng = Rng::new(5);
        let a = rng.gaussian(4, 7);
        assert_eq!(a.transpose().transpose(), a);
    }
}
