use crate::error::LinalgError;
use crate::linalg::Matrix;

/// Symmetric eigendecomposition A = U diag(lambda) U^T with eigenvalues in
/// ascending order and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Sweeps rotate every off-diagonal pair until the largest off-diagonal
/// magnitude drops below 1e-14 times the Frobenius norm of the input.
/// Rotations are scale invariant, so the solver handles entry magnitudes
/// from 1e-12 up to 1e12 without rescaling.
pub fn sym_eig(s: &Matrix) -> Result<SymEig, LinalgError> {
    s.check_symmetric()?;
    if !s.is_finite() {
        return Err(LinalgError::NotFinite);
    }
    let n = s.rows();
    let mut a = s.symmetrize();
    let mut u = Matrix::identity(n);
    let tol = 1e-14 * s.fro_norm();

    if n == 1 {
        return Ok(sorted(vec![a[(0, 0)]], u));
    }

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off_max = 0.0f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off_max = off_max.max(a[(p, q)].abs());
            }
        }
        if off_max <= tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                // Stable rotation angle: tan(2 phi) = 2 a_pq / (a_qq - a_pp).
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s_ = t * c;

                let app = a[(p, p)];
                let aqq = a[(q, q)];
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let new_kp = c * akp - s_ * akq;
                    let new_kq = s_ * akp + c * akq;
                    a[(k, p)] = new_kp;
                    a[(p, k)] = new_kp;
                    a[(k, q)] = new_kq;
                    a[(q, k)] = new_kq;
                }
                for k in 0..n {
                    let ukp = u[(k, p)];
                    let ukq = u[(k, q)];
                    u[(k, p)] = c * ukp - s_ * ukq;
                    u[(k, q)] = s_ * ukp + c * ukq;
                }
            }
        }
    }
    if !converged {
        let mut off_max = 0.0f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                off_max = off_max.max(a[(p, q)].abs());
            }
        }
        if off_max > tol {
            return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS });
        }
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    Ok(sorted(eigenvalues, u))
}

/// Sorts eigenpairs ascending and fixes each eigenvector's sign so the first
/// component of non-negligible magnitude is positive. Keeps results
/// deterministic across runs and eigenvalue ties.
fn sorted(eigenvalues: Vec<f64>, u: Matrix) -> SymEig {
    let n = eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigenvalues[i].partial_cmp(&eigenvalues[j]).unwrap());

    let mut vals = Vec::with_capacity(n);
    let mut vecs = Matrix::zeros(u.rows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(eigenvalues[src]);
        let col = u.column(src);
        let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut sign = 1.0;
        for &v in &col {
            if v.abs() > 1e-12 * scale {
                if v < 0.0 {
                    sign = -1.0;
                }
                break;
            }
        }
        for i in 0..u.rows() {
            vecs[(i, dst)] = sign * col[i];
        }
    }
    SymEig {
        eigenvalues: vals,
        eigenvectors: vecs,
    }
}

impl SymEig {
    /// Rebuilds U diag(f(lambda)) U^T.
    pub fn apply_spectral(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        let mut m = Matrix::zeros(n, n);
        for k in 0..n {
            let fk = f(self.eigenvalues[k]);
            if fk == 0.0 {
                continue;
            }
            for i in 0..n {
                let uik = u[(i, k)];
                if uik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    m[(i, j)] += fk * uik * u[(j, k)];
                }
            }
        }
        m
    }

    pub fn reconstruct(&self) -> Matrix {
        self.apply_spectral(|x| x)
    }
}

/// Principal square root of a symmetric positive definite matrix,
/// computed as U diag(sqrt(lambda)) U^T.
pub fn principal_sqrt(p: &Matrix) -> Result<Matrix, LinalgError> {
    let eig = sym_eig(p)?;
    if let Some(&min) = eig
        .eigenvalues
        .iter()
        .find(|&&v| v <= 0.0)
    {
        return Err(LinalgError::NotPositiveDefinite {
            context: format!("eigenvalue {min:e} <= 0 in principal square root"),
        });
    }
    Ok(eig.apply_spectral(f64::sqrt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruction_error(s: &Matrix, eig: &SymEig) -> f64 {
        eig.reconstruct().sub(s).fro_norm() / s.fro_norm().max(1e-300)
    }

    #[test]
    fn diagonal_input_sorted_ascending() {
        let s = Matrix::diag(&[2.0, -1.0]);
        let eig = sym_eig(&s).unwrap();
        assert_eq!(eig.eigenvalues, vec![-1.0, 2.0]);
        // Eigenvectors are signed identity columns in some order.
        let u = &eig.eigenvectors;
        assert_eq!(u[(0, 0)].abs(), 0.0);
        assert_eq!(u[(1, 0)], 1.0);
        assert_eq!(u[(0, 1)], 1.0);
        assert_eq!(u[(1, 1)].abs(), 0.0);
    }

    #[test]
    fn two_by_two_exchange_matrix() {
        let s = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        let eig = sym_eig(&s).unwrap();
        let r = 1.0 / 2.0f64.sqrt();
        assert!((eig.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-14);
        // lambda = -1 direction (1, -1)/sqrt(2); lambda = +1 direction (1, 1)/sqrt(2).
        assert!((eig.eigenvectors[(0, 0)] - r).abs() < 1e-14);
        assert!((eig.eigenvectors[(1, 0)] + r).abs() < 1e-14);
        assert!((eig.eigenvectors[(0, 1)] - r).abs() < 1e-14);
        assert!((eig.eigenvectors[(1, 1)] - r).abs() < 1e-14);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        // Deterministic pseudo-random symmetric matrix.
        let n = 10;
        let mut s = Matrix::zeros(n, n);
        let mut x = 0.5f64;
        for i in 0..n {
            for j in i..n {
                x = (x * 997.0 + 0.123).fract();
                let v = 2.0 * x - 1.0;
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        let eig = sym_eig(&s).unwrap();
        assert!(reconstruction_error(&s, &eig) < 1e-9);
        let u = &eig.eigenvectors;
        let gram = u.matmul_at(u);
        assert!(gram.sub(&Matrix::identity(n)).max_abs() < 1e-10);
        for w in eig.eigenvalues.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let s = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
        assert!(matches!(
            sym_eig(&s),
            Err(LinalgError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn rejects_non_square() {
        let s = Matrix::zeros(2, 3);
        assert!(matches!(sym_eig(&s), Err(LinalgError::NotSquare { .. })));
    }

    #[test]
    fn principal_sqrt_diagonal() {
        let p = Matrix::diag(&[4.0, 16.0]);
        let s = principal_sqrt(&p).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((s[(1, 1)] - 4.0).abs() < 1e-12);
        assert!(s[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn principal_sqrt_identity() {
        let s = principal_sqrt(&Matrix::identity(3)).unwrap();
        assert!(s.sub(&Matrix::identity(3)).max_abs() < 1e-12);
    }

    #[test]
    fn principal_sqrt_rejects_indefinite() {
        let p = Matrix::diag(&[1.0, -1.0]);
        assert!(matches!(
            principal_sqrt(&p),
            Err(LinalgError::NotPositiveDefinite { .. })
        ));
    }
}
