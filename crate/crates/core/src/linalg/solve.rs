use crate::error::LinalgError;
use crate::linalg::{kron, unvec_cols, vec_cols, Matrix};

/// Which system a triangular solve targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriMode {
    /// Solve Q x = b by back substitution (Q upper triangular).
    Normal,
    /// Solve Q^T x = b by forward substitution.
    Transposed,
}

/// Cholesky factorization P = Q^T Q with Q upper triangular and a strictly
/// positive diagonal.
pub fn cholesky_upper(p: &Matrix) -> Result<Matrix, LinalgError> {
    p.check_symmetric()?;
    let n = p.rows();
    let mut q = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut sum = p[(i, j)];
            for k in 0..i {
                sum -= q[(k, i)] * q[(k, j)];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(LinalgError::NotPositiveDefinite {
                        context: format!("pivot {sum:e} at index {i}"),
                    });
                }
                q[(i, i)] = sum.sqrt();
            } else {
                q[(i, j)] = sum / q[(i, i)];
            }
        }
    }
    Ok(q)
}

/// Solves an upper-triangular system with Q or its transpose.
pub fn tri_solve(q: &Matrix, b: &[f64], mode: TriMode) -> Result<Vec<f64>, LinalgError> {
    assert!(q.is_square(), "tri_solve requires a square matrix");
    let n = q.rows();
    assert_eq!(b.len(), n, "tri_solve dimension mismatch");
    for i in 0..n {
        if q[(i, i)] == 0.0 {
            return Err(LinalgError::SingularTriangular { index: i });
        }
    }
    let mut x = vec![0.0; n];
    match mode {
        TriMode::Normal => {
            for i in (0..n).rev() {
                let row = q.row(i);
                let mut sum = b[i];
                for j in i + 1..n {
                    sum -= row[j] * x[j];
                }
                x[i] = sum / row[i];
            }
        }
        TriMode::Transposed => {
            for i in 0..n {
                let mut sum = b[i];
                for j in 0..i {
                    sum -= q[(j, i)] * x[j];
                }
                x[i] = sum / q[(i, i)];
            }
        }
    }
    Ok(x)
}

/// Dense linear solve by Gaussian elimination with partial pivoting.
pub fn lin_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    assert!(a.is_square(), "lin_solve requires a square matrix");
    let n = a.rows();
    assert_eq!(b.len(), n, "lin_solve dimension mismatch");
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = a.max_abs();
    let pivot_tol = 1e-13 * scale.max(1e-300);

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = m[(col, col)].abs();
        for r in col + 1..n {
            let v = m[(r, col)].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val <= pivot_tol {
            return Err(LinalgError::SingularSystem {
                context: format!("pivot {pivot_val:e} at column {col}"),
            });
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(pivot_row, j)];
                m[(pivot_row, j)] = tmp;
            }
            x.swap(col, pivot_row);
        }
        let inv = 1.0 / m[(col, col)];
        for r in col + 1..n {
            let f = m[(r, col)] * inv;
            if f == 0.0 {
                continue;
            }
            m[(r, col)] = 0.0;
            for j in col + 1..n {
                m[(r, j)] -= f * m[(col, j)];
            }
            x[r] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut sum = x[i];
        for j in i + 1..n {
            sum -= m[(i, j)] * x[j];
        }
        x[i] = sum / m[(i, i)];
    }
    Ok(x)
}

/// Solves the continuous Lyapunov equation R X + X R = C for symmetric R and C
/// through the vectorized system (I (x) R + R (x) I) vec(X) = vec(C).
pub fn solve_lyapunov(r: &Matrix, c: &Matrix) -> Result<Matrix, LinalgError> {
    r.check_symmetric()?;
    c.check_symmetric()?;
    if r.rows() != c.rows() {
        return Err(LinalgError::invalid(format!(
            "lyapunov dimension mismatch: R is {}x{}, C is {}x{}",
            r.rows(),
            r.cols(),
            c.rows(),
            c.cols()
        )));
    }
    let n = r.rows();
    let eye = Matrix::identity(n);
    let system = kron(&eye, r).add(&kron(r, &eye));
    let rhs = vec_cols(c);
    let x = lin_solve(&system, &rhs)?;
    Ok(unvec_cols(&x, n, n).symmetrize())
}
