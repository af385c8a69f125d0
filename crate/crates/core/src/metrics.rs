//! Preconditioner quality measures: eigenvalue spread gain, mean absolute
//! eigenvalue of the preconditioned curvature, and gradient noise
//! suppression gain.

use crate::error::LinalgError;
use crate::linalg::{principal_sqrt, sym_eig, Matrix};

/// Quality of a preconditioner P against a curvature matrix H.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    /// eig_spread(H) / eig_spread(P H); plain SGD scores exactly 1.
    pub spread_gain: f64,
    /// Mean of |eig(P H)|; 1 means Newton-like scaling.
    pub mean_abs_eig: f64,
    /// tr(H^{-2}) / tr(P^2); larger than 1 means less noise amplification
    /// than the Newton preconditioner.
    pub noise_gain: f64,
}

/// Population standard deviation of ln|lambda| over a set of eigenvalues.
/// Natural log and divide-by-n; any fixed convention yields identical gain
/// ratios.
pub fn spread_from_eigs(eigs: &[f64]) -> Result<f64, LinalgError> {
    if eigs.iter().any(|v| v.abs() < 1e-300) {
        return Err(LinalgError::NearSingular {
            context: "zero eigenvalue in spread computation".into(),
        });
    }
    let logs: Vec<f64> = eigs.iter().map(|v| v.abs().ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / logs.len() as f64;
    Ok(var.sqrt())
}

/// Eigenvalue spread of a symmetric matrix.
pub fn eig_spread(m: &Matrix) -> Result<f64, LinalgError> {
    let eig = sym_eig(m)?;
    spread_from_eigs(&eig.eigenvalues)
}

/// Eigenvalues of P H for positive definite P and symmetric H, computed from
/// the symmetric congruence P^{1/2} H P^{1/2}, which shares its spectrum
/// with P H. Avoids any nonsymmetric eigensolver.
pub fn preconditioned_eigs(h: &Matrix, p: &Matrix) -> Result<Vec<f64>, LinalgError> {
    let s = principal_sqrt(p)?;
    let m = s.matmul(h).matmul(&s).symmetrize();
    Ok(sym_eig(&m)?.eigenvalues)
}

/// Full quality report for preconditioner P on curvature H.
pub fn quality(h: &Matrix, p: &Matrix) -> Result<QualityReport, LinalgError> {
    let h_eigs = sym_eig(h)?.eigenvalues;
    let max_abs = h_eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if h_eigs.iter().any(|v| v.abs() < 1e-14 * max_abs.max(1e-300)) {
        return Err(LinalgError::NearSingular {
            context: "singular curvature matrix".into(),
        });
    }
    let ph_eigs = preconditioned_eigs(h, p)?;

    let h_spread = spread_from_eigs(&h_eigs)?;
    let ph_spread = spread_from_eigs(&ph_eigs)?;
    let spread_gain = if ph_spread == 0.0 {
        if h_spread == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        h_spread / ph_spread
    };

    let mean_abs_eig = ph_eigs.iter().map(|v| v.abs()).sum::<f64>() / ph_eigs.len() as f64;

    let tr_h_inv2: f64 = h_eigs.iter().map(|v| 1.0 / (v * v)).sum();
    // P is symmetric, so tr(P^2) is its squared Frobenius norm.
    let tr_p2 = p.fro_norm().powi(2);
    let noise_gain = tr_h_inv2 / tr_p2;

    Ok(QualityReport {
        spread_gain,
        mean_abs_eig,
        noise_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::ideal_precond;

    #[test]
    fn spread_of_equal_eigenvalues_is_zero() {
        assert_eq!(spread_from_eigs(&[3.0, 3.0]).unwrap(), 0.0);
        assert_eq!(eig_spread(&Matrix::diag(&[2.5, 2.5])).unwrap(), 0.0);
    }

    #[test]
    fn spread_two_point_case() {
        let s = eig_spread(&Matrix::diag(&[1.0, 10.0])).unwrap();
        assert!((s - 10.0f64.ln() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn spread_ignores_signs() {
        assert_eq!(eig_spread(&Matrix::diag(&[-1.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn spread_rejects_zero_eigenvalue() {
        assert!(spread_from_eigs(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn identity_preconditioner_is_the_baseline() {
        // Spread gain of P = I is exactly 1 for any curvature; the noise
        // gain formula tr(H^-2)/tr(P^2) equals 1 at P = I only when H is
        // normalized, e.g. the identity.
        let h = Matrix::from_rows(&[&[2.0, 0.3], &[0.3, 0.9]]).unwrap();
        let r = quality(&h, &Matrix::identity(2)).unwrap();
        assert_eq!(r.spread_gain, 1.0);
        let eigs = sym_eig(&h).unwrap().eigenvalues;
        let mean = eigs.iter().map(|v| v.abs()).sum::<f64>() / 2.0;
        assert!((r.mean_abs_eig - mean).abs() <= 1e-12);

        let r = quality(&Matrix::identity(3), &Matrix::identity(3)).unwrap();
        assert_eq!(r.spread_gain, 1.0);
        assert!((r.noise_gain - 1.0).abs() <= 1e-12);
        assert!((r.mean_abs_eig - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn ideal_preconditioner_normalizes_everything() {
        let h = Matrix::from_rows(&[
            &[1.4, -0.7, 0.2],
            &[-0.7, -2.0, 0.5],
            &[0.2, 0.5, 0.1],
        ])
        .unwrap();
        let p = ideal_precond(&h).unwrap();
        let r = quality(&h, &p).unwrap();
        assert!((r.mean_abs_eig - 1.0).abs() <= 1e-9);
        assert!(r.spread_gain.is_infinite() || r.spread_gain > 1e6);
    }

    #[test]
    fn shrunk_identity_noise_gain() {
        // H = I, P = I/2: tr(H^{-2}) = n, tr(P^2) = n/4.
        let r = quality(&Matrix::identity(3), &Matrix::identity(3).scale(0.5)).unwrap();
        assert!((r.noise_gain - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn sign_flip_invariance() {
        let h = Matrix::from_rows(&[&[1.2, 0.4], &[0.4, -0.8]]).unwrap();
        let p = Matrix::from_rows(&[&[0.9, 0.1], &[0.1, 1.1]]).unwrap();
        let a = quality(&h, &p).unwrap();
        let b = quality(&h.scale(-1.0), &p).unwrap();
        assert!((a.spread_gain - b.spread_gain).abs() <= 1e-10);
        assert!((a.mean_abs_eig - b.mean_abs_eig).abs() <= 1e-10);
        assert!((a.noise_gain - b.noise_gain).abs() <= 1e-10);
    }

    #[test]
    fn fig1_preconditioner_equalizes_amplitudes() {
        // Curvature [[-1.5,-2.5],[-2.5,-1.5]] has eigenvalues (-4, 1);
        // the preconditioner [[1.25,-0.75],[-0.75,1.25]] scales them to
        // amplitudes of exactly 2 with signs preserved.
        let h = Matrix::from_rows(&[&[-1.5, -2.5], &[-2.5, -1.5]]).unwrap();
        let p = Matrix::from_rows(&[&[1.25, -0.75], &[-0.75, 1.25]]).unwrap();
        let mut eigs = preconditioned_eigs(&h, &p).unwrap();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eigs[0] + 2.0).abs() <= 1e-12);
        assert!((eigs[1] - 2.0).abs() <= 1e-12);
    }
}
