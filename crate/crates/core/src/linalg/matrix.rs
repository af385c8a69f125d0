use std::ops::{Index, IndexMut};

use crate::error::LinalgError;

/// Dense real matrix, row-major storage, 64-bit scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data without validating entries.
    /// Intended for internal construction where finiteness is maintained
    /// by the algorithms themselves.
    pub fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        assert_eq!(data.len(), rows * cols, "data length mismatch");
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from user-supplied data, rejecting NaN/Inf entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NotFinite);
        }
        Ok(Matrix::from_parts(rows, cols, data))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, LinalgError> {
        assert!(!rows.is_empty(), "matrix dimensions must be >= 1");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix::from_parts(self.rows, self.cols, data)
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix::from_parts(self.rows, self.cols, data)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let data = self.data.iter().map(|a| a * s).collect();
        Matrix::from_parts(self.rows, self.cols, data)
    }

    /// C = A * B with a cache-friendly i-k-j loop order.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut c = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let crow = c.row_mut(i);
            for (k, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = other.row(k);
                for (cv, &bv) in crow.iter_mut().zip(brow) {
                    *cv += aik * bv;
                }
            }
        }
        c
    }

    /// C = A * B^T. Rows of both operands are contiguous, so each entry is a dot product.
    pub fn matmul_bt(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_bt dimension mismatch");
        let mut c = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            let crow = c.row_mut(i);
            for (j, cv) in crow.iter_mut().enumerate() {
                *cv = dot(arow, other.row(j));
            }
        }
        c
    }

    /// C = A^T * B via a k-i-j loop so the inner loop streams rows of B.
    pub fn matmul_at(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "matmul_at dimension mismatch");
        let mut c = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, &aki) in arow.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                let crow = c.row_mut(i);
                for (cv, &bv) in crow.iter_mut().zip(brow) {
                    *cv += aki * bv;
                }
            }
        }
        c
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// y = A^T x.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "matvec_t dimension mismatch");
        let mut y = vec![0.0; self.cols];
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            for (yv, &a) in y.iter_mut().zip(self.row(k)) {
                *yv += xk * a;
            }
        }
        y
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum element-wise absolute value.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute value over the diagonal.
    pub fn max_abs_diag(&self) -> f64 {
        assert!(self.is_square(), "max_abs_diag requires a square matrix");
        (0..self.rows).fold(0.0f64, |m, i| m.max(self[(i, i)].abs()))
    }

    /// Upper triangular part, diagonal included; strictly-lower entries zeroed.
    pub fn triu(&self) -> Matrix {
        assert!(self.is_square(), "triu requires a square matrix");
        let mut t = self.clone();
        for i in 1..t.rows {
            for j in 0..i {
                t[(i, j)] = 0.0;
            }
        }
        t
    }

    pub fn max_asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut a = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                a = a.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        a
    }

    /// Checks squareness and symmetry relative to the magnitude of the entries.
    pub fn check_symmetric(&self) -> Result<(), LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let scale = self.max_abs();
        let asym = self.max_asymmetry();
        if asym > 1e-12 * scale.max(1e-300) {
            return Err(LinalgError::NotSymmetric { asymmetry: asym });
        }
        Ok(())
    }

    pub fn symmetrize(&self) -> Matrix {
        assert!(self.is_square());
        let mut s = self.clone();
        for i in 0..s.rows {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn trace(&self) -> f64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Kronecker product A (x) B.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let mut k = Matrix::zeros(a.rows() * b.rows(), a.cols() * b.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for p in 0..b.rows() {
                for q in 0..b.cols() {
                    k[(i * b.rows() + p, j * b.cols() + q)] = aij * b[(p, q)];
                }
            }
        }
    }
    k
}

/// Column-stacking vectorization: vec(A) lists A column by column.
pub fn vec_cols(a: &Matrix) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.rows() * a.cols());
    for j in 0..a.cols() {
        for i in 0..a.rows() {
            v.push(a[(i, j)]);
        }
    }
    v
}

/// Inverse of `vec_cols`: rebuilds a rows x cols matrix from a column-stacked vector.
pub fn unvec_cols(v: &[f64], rows: usize, cols: usize) -> Matrix {
    assert_eq!(v.len(), rows * cols, "unvec_cols length mismatch");
    let mut m = Matrix::zeros(rows, cols);
    let mut idx = 0;
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = v[idx];
            idx += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_identity_blocks() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let k = kron(&Matrix::identity(2), &m);
        assert_eq!(k[(0, 0)], 1.0);
        assert_eq!(k[(1, 1)], 4.0);
        assert_eq!(k[(2, 2)], 1.0);
        assert_eq!(k[(3, 3)], 4.0);
        assert_eq!(k[(0, 2)], 0.0);
        assert_eq!(k[(2, 0)], 0.0);
    }

    #[test]
    fn kron_rectangular() {
        // kron([[1,2]], [[3],[4]]) = [[3,6],[4,8]]
        let a = Matrix::from_rows(&[&[1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[&[3.0], &[4.0]]).unwrap();
        let k = kron(&a, &b);
        assert_eq!((k.rows(), k.cols()), (2, 2));
        assert_eq!(k[(0, 0)], 3.0);
        assert_eq!(k[(0, 1)], 6.0);
        assert_eq!(k[(1, 0)], 4.0);
        assert_eq!(k[(1, 1)], 8.0);
    }

    #[test]
    fn vec_stacks_columns() {
        let a = Matrix::from_rows(&[&[1.0, 3.0], &[2.0, 4.0]]).unwrap();
        assert_eq!(vec_cols(&a), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unvec_cols(&[1.0, 2.0, 3.0, 4.0], 2, 2), a);
    }

    #[test]
    fn triu_zeroes_strict_lower() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let t = a.triu();
        assert_eq!(t[(0, 0)], 1.0);
        assert_eq!(t[(0, 1)], 2.0);
        assert_eq!(t[(1, 0)], 0.0);
        assert_eq!(t[(1, 1)], 4.0);
    }

    #[test]
    fn max_abs_variants() {
        let a = Matrix::from_rows(&[&[-5.0, 1.0], &[2.0, 3.0]]).unwrap();
        assert_eq!(a.max_abs(), 5.0);
        let b = Matrix::from_rows(&[&[-5.0, 9.0], &[2.0, 3.0]]).unwrap();
        assert_eq!(b.max_abs_diag(), 5.0);
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn transposed_products_agree_with_plain() {
        let a = Matrix::from_fn(3, 4, |i, j| (i * 7 + j) as f64 * 0.3 - 1.0);
        let b = Matrix::from_fn(5, 4, |i, j| (i + 2 * j) as f64 * 0.1);
        let c = Matrix::from_fn(3, 5, |i, j| (2 * i + j) as f64 - 3.0);
        let bt = b.transpose();
        let at = a.transpose();
        let d1 = a.matmul_bt(&b);
        let d2 = a.matmul(&bt);
        assert!(d1.sub(&d2).max_abs() < 1e-14);
        let e1 = a.matmul_at(&c);
        let e2 = at.matmul(&c);
        assert!(e1.sub(&e2).max_abs() < 1e-14);
    }
}
