//! Structured products and solves for upper-triangular factors.
//!
//! All functions assume the triangular operand is square with its
//! strictly-lower entries exactly zero, which the factor types enforce.
//! Loops are bounded to the structural nonzeros, so a full factor update
//! costs about n^3/6 multiplies instead of n^3.

use crate::error::LinalgError;
use crate::linalg::Matrix;

/// C = U * D for upper-triangular U (n x n) and dense D (n x m).
pub fn upper_times(u: &Matrix, d: &Matrix) -> Matrix {
    let n = u.rows();
    assert_eq!(u.cols(), n);
    assert_eq!(d.rows(), n);
    let m = d.cols();
    let mut c = Matrix::zeros(n, m);
    for i in 0..n {
        let urow = u.row(i);
        let crow = c.row_mut(i);
        for k in i..n {
            let uik = urow[k];
            if uik == 0.0 {
                continue;
            }
            let drow = d.row(k);
            for (cv, &dv) in crow.iter_mut().zip(drow) {
                *cv += uik * dv;
            }
        }
    }
    c
}

/// C = U^T * D for upper-triangular U (n x n) and dense D (n x m).
pub fn upper_t_times(u: &Matrix, d: &Matrix) -> Matrix {
    let n = u.rows();
    assert_eq!(u.cols(), n);
    assert_eq!(d.rows(), n);
    let m = d.cols();
    let mut c = Matrix::zeros(n, m);
    for k in 0..n {
        let urow = u.row(k);
        let drow = d.row(k);
        for i in k..n {
            let uki = urow[i];
            if uki == 0.0 {
                continue;
            }
            let crow = c.row_mut(i);
            for (cv, &dv) in crow.iter_mut().zip(drow) {
                *cv += uki * dv;
            }
        }
    }
    c
}

/// C = D * U for dense D (m x n) and upper-triangular U (n x n).
pub fn times_upper(d: &Matrix, u: &Matrix) -> Matrix {
    let n = u.rows();
    assert_eq!(u.cols(), n);
    assert_eq!(d.cols(), n);
    let m = d.rows();
    let mut c = Matrix::zeros(m, n);
    for i in 0..m {
        let drow = d.row(i);
        let crow = c.row_mut(i);
        for k in 0..n {
            let dik = drow[k];
            if dik == 0.0 {
                continue;
            }
            let urow = &u.row(k)[k..];
            for (cv, &uv) in crow[k..].iter_mut().zip(urow) {
                *cv += dik * uv;
            }
        }
    }
    c
}

/// C = D * U^T for dense D (m x n) and upper-triangular U (n x n).
pub fn times_upper_t(d: &Matrix, u: &Matrix) -> Matrix {
    let n = u.rows();
    assert_eq!(u.cols(), n);
    assert_eq!(d.cols(), n);
    let m = d.rows();
    let mut c = Matrix::zeros(m, n);
    for i in 0..m {
        let drow = d.row(i);
        let crow = c.row_mut(i);
        for (j, cv) in crow.iter_mut().enumerate() {
            // Row j of U is nonzero from column j on.
            *cv = dot_from(drow, u.row(j), j);
        }
    }
    c
}

/// C = A * B for upper-triangular A and B; the product is upper triangular.
pub fn upper_times_upper(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.rows();
    assert_eq!(a.cols(), n);
    assert_eq!(b.rows(), n);
    assert_eq!(b.cols(), n);
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for k in i..n {
            let aik = arow[k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.row(k)[k..];
            for (cv, &bv) in crow[k..].iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
    c
}

/// y = U x for upper-triangular U.
pub fn upper_matvec(u: &Matrix, x: &[f64]) -> Vec<f64> {
    let n = u.rows();
    assert_eq!(x.len(), n);
    (0..n).map(|i| dot_from(u.row(i), x, i)).collect()
}

/// y = U^T x for upper-triangular U.
pub fn upper_t_matvec(u: &Matrix, x: &[f64]) -> Vec<f64> {
    let n = u.rows();
    assert_eq!(x.len(), n);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        let urow = &u.row(i)[i..];
        for (yv, &uv) in y[i..].iter_mut().zip(urow) {
            *yv += xi * uv;
        }
    }
    y
}

/// Solves U^T Y = R for Y, where U is upper triangular and R is n x m.
/// Forward substitution over block rows.
pub fn solve_upper_t_mat(u: &Matrix, r: &Matrix) -> Result<Matrix, LinalgError> {
    let n = u.rows();
    assert_eq!(r.rows(), n);
    let m = r.cols();
    let mut y = Matrix::zeros(n, m);
    for i in 0..n {
        let uii = u[(i, i)];
        if uii == 0.0 {
            return Err(LinalgError::SingularTriangular { index: i });
        }
        let mut acc: Vec<f64> = r.row(i).to_vec();
        for j in 0..i {
            let uji = u[(j, i)];
            if uji == 0.0 {
                continue;
            }
            let yrow = y.row(j).to_vec();
            for (av, yv) in acc.iter_mut().zip(yrow) {
                *av -= uji * yv;
            }
        }
        let inv = 1.0 / uii;
        for (yv, av) in y.row_mut(i).iter_mut().zip(acc) {
            *yv = av * inv;
        }
    }
    Ok(y)
}

/// Solves X U = R for X, where U is upper triangular and R is m x n.
pub fn solve_mat_upper(r: &Matrix, u: &Matrix) -> Result<Matrix, LinalgError> {
    let n = u.rows();
    assert_eq!(r.cols(), n);
    let m = r.rows();
    for i in 0..n {
        if u[(i, i)] == 0.0 {
            return Err(LinalgError::SingularTriangular { index: i });
        }
    }
    let mut x = Matrix::zeros(m, n);
    for i in 0..m {
        // Row-wise forward substitution: x_row U = r_row.
        let rrow = r.row(i).to_vec();
        let xrow = x.row_mut(i);
        for j in 0..n {
            let mut sum = rrow[j];
            for k in 0..j {
                sum -= xrow[k] * u[(k, j)];
            }
            xrow[j] = sum / u[(j, j)];
        }
    }
    Ok(x)
}

/// triu(A A^T - B B^T) for A, B with equal row counts.
pub fn triu_gram_diff(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.rows();
    assert_eq!(b.rows(), n);
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        let ai = a.row(i);
        let bi = b.row(i);
        for j in i..n {
            c[(i, j)] = dot_from(ai, a.row(j), 0) - dot_from(bi, b.row(j), 0);
        }
    }
    c
}

/// triu(a a^T - b b^T) for vectors.
pub fn triu_outer_diff(a: &[f64], b: &[f64]) -> Matrix {
    let n = a.len();
    assert_eq!(b.len(), n);
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            c[(i, j)] = a[i] * a[j] - b[i] * b[j];
        }
    }
    c
}

/// triu(u w^T + w u^T) for vectors.
pub fn triu_outer_sym(u: &[f64], w: &[f64]) -> Matrix {
    let n = u.len();
    assert_eq!(w.len(), n);
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            c[(i, j)] = u[i] * w[j] + w[i] * u[j];
        }
    }
    c
}

fn dot_from(a: &[f64], b: &[f64], start: usize) -> f64 {
    a[start..].iter().zip(&b[start..]).map(|(x, y)| x * y).sum()
}
