//! Synthetic quadratic model with a controllable curvature matrix and an
//! optional gradient-noise level specified as a signal-to-noise ratio.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{dot, Matrix};
use crate::psgd::GradientSource;

/// Quadratic loss 0.5 theta^T H theta + g0^T theta.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    h: Matrix,
    g0: Vec<f64>,
    noise_snr_db: Option<f64>,
}

/// The stochasticity of one mini-batch: pre-drawn standard-normal noise
/// shared between both gradient evaluations of an iteration.
#[derive(Debug, Clone)]
pub struct QuadraticBatch {
    pub noise: Option<Vec<f64>>,
}

impl QuadraticModel {
    pub fn new(h: Matrix, g0: Vec<f64>, noise_snr_db: Option<f64>) -> Self {
        h.check_symmetric().expect("curvature must be symmetric");
        assert_eq!(h.rows(), g0.len(), "dimension mismatch");
        QuadraticModel {
            h,
            g0,
            noise_snr_db,
        }
    }

    pub fn hessian(&self) -> &Matrix {
        &self.h
    }

    pub fn dim(&self) -> usize {
        self.g0.len()
    }

    /// Draws one batch worth of noise from the stream.
    pub fn draw_batch(&self, rng: &mut ChaCha8Rng) -> QuadraticBatch {
        let noise = self.noise_snr_db.map(|_| {
            (0..self.dim())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        });
        QuadraticBatch { noise }
    }

    /// Exact gradient H theta + g0 plus, when an SNR is configured, additive
    /// Gaussian noise with per-component variance
    /// |signal|^2 * 10^(-SNR_dB / 10) / n drawn from `rng`.
    pub fn gradient_sampled(&self, theta: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let batch = self.draw_batch(rng);
        self.loss_and_gradient(theta, &batch).1
    }

    fn noise_std(&self, signal: &[f64]) -> f64 {
        match self.noise_snr_db {
            None => 0.0,
            Some(snr_db) => {
                let power: f64 = signal.iter().map(|v| v * v).sum();
                (power * 10f64.powf(-snr_db / 10.0) / signal.len() as f64).sqrt()
            }
        }
    }
}

impl GradientSource for QuadraticModel {
    type Batch = QuadraticBatch;

    fn dim(&self) -> usize {
        self.g0.len()
    }

    fn loss_and_gradient(&self, theta: &[f64], batch: &QuadraticBatch) -> (f64, Vec<f64>) {
        let mut g = self.h.matvec(theta);
        for (gv, g0v) in g.iter_mut().zip(&self.g0) {
            *gv += g0v;
        }
        let loss = 0.5 * dot(theta, &self.h.matvec(theta)) + dot(&self.g0, theta);
        if let Some(z) = &batch.noise {
            let std = self.noise_std(&g);
            for (gv, zv) in g.iter_mut().zip(z) {
                *gv += std * zv;
            }
        }
        (loss, g)
    }
}

/// One sample of the stochastic secant relation dg = H dtheta + eps:
/// dtheta is N(0, perturbation_scale I) and, when an SNR is given, eps is
/// white noise with power 10^(-snr_db/10) times the power of H dtheta.
pub fn secant_pair(
    h: &Matrix,
    perturbation_scale: f64,
    snr_db: Option<f64>,
    rng_theta: &mut ChaCha8Rng,
    rng_noise: &mut ChaCha8Rng,
) -> crate::precond::PerturbationPair {
    let n = h.rows();
    let std = perturbation_scale.sqrt();
    let dtheta: Vec<f64> = (0..n)
        .map(|_| std * rng_theta.sample::<f64, _>(StandardNormal))
        .collect();
    let mut dg = h.matvec(&dtheta);
    if let Some(snr) = snr_db {
        let power: f64 = dg.iter().map(|v| v * v).sum();
        let noise_std = (power * 10f64.powf(-snr / 10.0) / n as f64).sqrt();
        for v in dg.iter_mut() {
            *v += noise_std * rng_noise.sample::<f64, _>(StandardNormal);
        }
    }
    crate::precond::PerturbationPair::new(dtheta, dg)
}

/// Random curvature matrix for the estimator benchmark. Entries derive from
/// N(0, sigma_h_sq). The definite variant is A^T A + 1e-3 sigma_h_sq I, so
/// its spectrum scales proportionally with sigma_h_sq; the indefinite
/// variant is a symmetric matrix of i.i.d. Gaussian entries.
pub fn make_hessian(definite: bool, sigma_h_sq: f64, rng: &mut ChaCha8Rng) -> Matrix {
    assert!(sigma_h_sq > 0.0);
    let n = 10;
    let sigma = sigma_h_sq.sqrt();
    if definite {
        let a = Matrix::from_fn(n, n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let mut h = a.matmul_at(&a);
        for i in 0..n {
            h[(i, i)] += 1e-3 * sigma_h_sq;
        }
        h
    } else {
        let mut h = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = sigma * rng.sample::<f64, _>(StandardNormal);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }
}
