//! Closed-form reference preconditioners computed from population
//! covariances of perturbation pairs, plus the ideal preconditioner built
//! from a known curvature matrix. These are the ground truth the stochastic
//! estimators are validated against.

use crate::error::LinalgError;
use crate::linalg::{principal_sqrt, solve_lyapunov, sym_eig, Matrix};

/// Second-moment matrices of a perturbation-pair population:
/// R_theta = E[dtheta dtheta^T], R_g = E[dg dg^T], and the cross moments.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub r_theta: Matrix,
    pub r_g: Matrix,
    pub r_theta_g: Matrix,
    pub r_g_theta: Matrix,
}

impl CovarianceSet {
    pub fn new(
        r_theta: Matrix,
        r_g: Matrix,
        r_theta_g: Matrix,
    ) -> Result<Self, LinalgError> {
        r_theta.check_symmetric()?;
        r_g.check_symmetric()?;
        if r_theta_g.rows() != r_theta.rows() || r_theta_g.cols() != r_theta.rows() {
            return Err(LinalgError::invalid(
                "cross covariance dimension mismatch".to_string(),
            ));
        }
        let r_g_theta = r_theta_g.transpose();
        Ok(CovarianceSet {
            r_theta,
            r_g,
            r_theta_g,
            r_g_theta,
        })
    }

    /// Covariances of the secant model dg = H dtheta + eps under white
    /// perturbations and white noise:
    /// R_theta = sigma_theta^2 I, R_theta_g = sigma_theta^2 H,
    /// R_g = sigma_theta^2 H^2 + sigma_eps^2 I.
    pub fn white(h: &Matrix, sigma_theta_sq: f64, sigma_eps_sq: f64) -> Self {
        assert!(sigma_theta_sq > 0.0, "perturbation variance must be > 0");
        assert!(sigma_eps_sq >= 0.0, "noise variance must be >= 0");
        let n = h.rows();
        let r_theta = Matrix::identity(n).scale(sigma_theta_sq);
        let r_theta_g = h.scale(sigma_theta_sq);
        let mut r_g = h.matmul(h).scale(sigma_theta_sq);
        for i in 0..n {
            r_g[(i, i)] += sigma_eps_sq;
        }
        CovarianceSet {
            r_theta,
            r_g,
            r_theta_g: r_theta_g.clone(),
            r_g_theta: r_theta_g,
        }
    }

    pub fn dim(&self) -> usize {
        self.r_theta.rows()
    }
}

/// Criterion-1 optimum: solve the Lyapunov equation
/// R_theta X + X R_theta = R_theta_g + R_g_theta for X = P^{-1}, then invert.
/// The result is symmetric but not necessarily positive definite.
pub fn precond1_closed(c: &CovarianceSet) -> Result<Matrix, LinalgError> {
    let rhs = c.r_theta_g.add(&c.r_g_theta).symmetrize();
    let x = solve_lyapunov(&c.r_theta, &rhs)?;
    invert_symmetric(&x).map_err(|e| match e {
        LinalgError::NearSingular { context } => LinalgError::NearSingular {
            context: format!("criterion-1 inverse preconditioner is singular: {context}"),
        },
        other => other,
    })
}

/// Criterion-2 optimum: P solves P R_g + R_g P = R_g_theta + R_theta_g,
/// again a continuous Lyapunov equation. Symmetric, possibly indefinite.
pub fn precond2_closed(c: &CovarianceSet) -> Result<Matrix, LinalgError> {
    let rhs = c.r_theta_g.add(&c.r_g_theta).symmetrize();
    solve_lyapunov(&c.r_g, &rhs)
}

/// Criterion-3 optimum: the positive definite solution of the Riccati-type
/// equation P R_g P = R_theta, computed as
/// P = S U D^{-1/2} U^T S with S = R_theta^{1/2} and S R_g S = U D U^T.
pub fn precond3_closed(c: &CovarianceSet) -> Result<Matrix, LinalgError> {
    let s = principal_sqrt(&c.r_theta)?;
    let inner = s.matmul(&c.r_g).matmul(&s).symmetrize();
    let eig = sym_eig(&inner)?;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&v| v <= 0.0) {
        return Err(LinalgError::NotPositiveDefinite {
            context: format!("eigenvalue {bad:e} of R_theta^0.5 R_g R_theta^0.5"),
        });
    }
    let middle = eig.apply_spectral(|v| 1.0 / v.sqrt());
    Ok(s.matmul(&middle).matmul(&s).symmetrize())
}

/// Preconditioner making all eigenvalues of P H unit magnitude while keeping
/// their signs: P = U |D|^{-1} U^T from H = U D U^T.
pub fn ideal_precond(h: &Matrix) -> Result<Matrix, LinalgError> {
    let eig = sym_eig(h)?;
    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(&small) = eig
        .eigenvalues
        .iter()
        .find(|&&v| v.abs() < 1e-12 * max_abs.max(1e-300))
    {
        return Err(LinalgError::NearSingular {
            context: format!("eigenvalue {small:e} too small for an ideal preconditioner"),
        });
    }
    Ok(eig.apply_spectral(|v| 1.0 / v.abs()))
}

/// Inverse of a symmetric matrix through its eigendecomposition.
fn invert_symmetric(x: &Matrix) -> Result<Matrix, LinalgError> {
    let eig = sym_eig(x)?;
    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(&small) = eig
        .eigenvalues
        .iter()
        .find(|&&v| v.abs() < 1e-12 * max_abs.max(1e-300))
    {
        return Err(LinalgError::NearSingular {
            context: format!("eigenvalue {small:e}"),
        });
    }
    Ok(eig.apply_spectral(|v| 1.0 / v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cholesky_upper;

    fn spd(n: usize, seed: f64) -> Matrix {
        let mut x = seed;
        let a = Matrix::from_fn(n, n, |_, _| {
            x = (x * 997.0 + 0.123).fract();
            2.0 * x - 1.0
        });
        let mut m = a.matmul_at(&a);
        for i in 0..n {
            m[(i, i)] += 0.5;
        }
        m
    }

    fn symmetric(n: usize, seed: f64) -> Matrix {
        let mut x = seed;
        let a = Matrix::from_fn(n, n, |_, _| {
            x = (x * 997.0 + 0.123).fract();
            2.0 * x - 1.0
        });
        a.add(&a.transpose()).scale(0.5)
    }

    #[test]
    fn precond1_noise_free_recovers_inverse_hessian() {
        // R_theta_g = R_theta H and R_g_theta = H R_theta give P = H^{-1}.
        let h = spd(5, 0.21);
        let r_theta = spd(5, 0.43);
        let c = CovarianceSet::new(
            r_theta.clone(),
            h.matmul(&r_theta).matmul(&h).symmetrize(),
            r_theta.matmul(&h),
        )
        .unwrap();
        let p = precond1_closed(&c).unwrap();
        let ph = p.matmul(&h);
        let err = ph.sub(&Matrix::identity(5)).max_abs();
        assert!(err <= 1e-8, "P H deviates from identity by {err:e}");
    }

    #[test]
    fn precond1_trivial_lyapunov_collapse() {
        // R_theta = I: 2X = 2H means X = H and P = H^{-1}.
        let h = spd(4, 0.77);
        let c = CovarianceSet::new(Matrix::identity(4), h.matmul(&h), h.clone()).unwrap();
        let p = precond1_closed(&c).unwrap();
        assert!(p.matmul(&h).sub(&Matrix::identity(4)).max_abs() <= 1e-9);
    }

    #[test]
    fn precond1_indefinite_hessian_noise_free() {
        let h = symmetric(4, 0.3);
        let r_theta = spd(4, 0.9);
        let c = CovarianceSet::new(
            r_theta.clone(),
            h.matmul(&r_theta).matmul(&h).symmetrize(),
            r_theta.matmul(&h),
        )
        .unwrap();
        let p = precond1_closed(&c).unwrap();
        let hinv = invert_symmetric(&h).unwrap();
        assert!(p.sub(&hinv).max_abs() <= 1e-8 * hinv.max_abs().max(1.0));
    }

    #[test]
    fn precond2_matches_white_closed_form() {
        let h = symmetric(5, 0.11);
        let sigma_theta_sq = 1.0;
        let sigma_eps_sq = 0.7;
        let c = CovarianceSet::white(&h, sigma_theta_sq, sigma_eps_sq);
        let p = precond2_closed(&c).unwrap();

        let eig = sym_eig(&h).unwrap();
        let ratio = sigma_eps_sq / sigma_theta_sq;
        let expect = eig.apply_spectral(|l| l / (l * l + ratio));
        assert!(p.sub(&expect).max_abs() <= 1e-8);
    }

    #[test]
    fn precond2_scalar_coefficient() {
        // lambda = 1 and sigma ratio 1 give coefficient 0.5.
        let h = Matrix::diag(&[1.0]);
        let c = CovarianceSet::white(&h, 1.0, 1.0);
        let p = precond2_closed(&c).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn precond2_noise_free_unbiased() {
        let h = spd(4, 0.61);
        let c = CovarianceSet::white(&h, 1.0, 0.0);
        let p = precond2_closed(&c).unwrap();
        assert!(p.matmul(&h).sub(&Matrix::identity(4)).max_abs() <= 1e-8);
    }

    #[test]
    fn precond3_identity_case() {
        let c = CovarianceSet::new(Matrix::identity(3), Matrix::identity(3), Matrix::zeros(3, 3))
            .unwrap();
        let p = precond3_closed(&c).unwrap();
        assert!(p.sub(&Matrix::identity(3)).max_abs() <= 1e-12);
    }

    #[test]
    fn precond3_scalar_riccati() {
        // P * 4 * P = 9 gives P = 1.5.
        let c = CovarianceSet::new(
            Matrix::diag(&[9.0]),
            Matrix::diag(&[4.0]),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        let p = precond3_closed(&c).unwrap();
        assert!((p[(0, 0)] - 1.5).abs() <= 1e-12);
    }

    #[test]
    fn precond3_white_coefficients() {
        let h = symmetric(5, 0.47);
        let sigma_eps_sq = 2.3;
        let c = CovarianceSet::white(&h, 1.0, sigma_eps_sq);
        let p = precond3_closed(&c).unwrap();
        let expect = sym_eig(&h)
            .unwrap()
            .apply_spectral(|l| 1.0 / (l * l + sigma_eps_sq).sqrt());
        assert!(p.sub(&expect).max_abs() <= 1e-8);
    }

    #[test]
    fn precond3_heavy_noise_damps() {
        // lambda = 1, sigma_theta = 1, sigma_eps = 10: coefficient 1/sqrt(101).
        let c = CovarianceSet::white(&Matrix::diag(&[1.0]), 1.0, 100.0);
        let p = precond3_closed(&c).unwrap();
        assert!((p[(0, 0)] - 1.0 / 101.0f64.sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn precond3_output_is_positive_definite() {
        let c = CovarianceSet::new(spd(6, 0.13), spd(6, 0.87), Matrix::zeros(6, 6)).unwrap();
        let p = precond3_closed(&c).unwrap();
        assert!(cholesky_upper(&p).is_ok());
        let residual = p.matmul(&c.r_g).matmul(&p).sub(&c.r_theta);
        assert!(residual.fro_norm() <= 1e-8 * c.r_theta.fro_norm());
    }

    #[test]
    fn white_covariance_fields() {
        let h = Matrix::diag(&[3.0]);
        let c = CovarianceSet::white(&h, 1.0, 16.0);
        assert_eq!(c.r_g[(0, 0)], 25.0);
        let p = precond3_closed(&c).unwrap();
        assert!((p[(0, 0)] - 0.2).abs() <= 1e-12);

        let c0 = CovarianceSet::white(&Matrix::identity(2), 1.0, 0.0);
        assert!(c0.r_g.sub(&Matrix::identity(2)).max_abs() == 0.0);
    }

    #[test]
    fn ideal_precond_diagonal_and_exchange() {
        let p = ideal_precond(&Matrix::diag(&[2.0, -0.5])).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() <= 1e-12);
        assert!((p[(1, 1)] - 2.0).abs() <= 1e-12);

        let h = Matrix::diag(&[1.0, -1.0]);
        let p = ideal_precond(&h).unwrap();
        assert!(p.sub(&Matrix::identity(2)).max_abs() <= 1e-12);
    }

    #[test]
    fn ideal_precond_rejects_singular() {
        let h = Matrix::diag(&[1.0, 0.0]);
        assert!(matches!(
            ideal_precond(&h),
            Err(LinalgError::NearSingular { .. })
        ));
    }
}
