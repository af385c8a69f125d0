//! Estimator-level integration tests: convergence of the dense criterion-3
//! estimator to oracle quality, noise damping, and scale equivariance of the
//! relative-gradient updates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use psgd_core::linalg::Matrix;
use psgd_core::metrics::quality;
use psgd_core::models::make_hessian;
use psgd_core::oracles::ideal_precond;
use psgd_core::precond::{Criterion, PerturbationPair, StepNorm, TriFactor};
use psgd_core::psgd::DEFAULT_PERTURBATION_SCALE;

/// Synthetic perturbation pair from the secant model dg = H dtheta + eps.
fn draw_pair(
    h: &Matrix,
    noisy: bool,
    rng_theta: &mut ChaCha8Rng,
    rng_noise: &mut ChaCha8Rng,
) -> PerturbationPair {
    let n = h.rows();
    let std = DEFAULT_PERTURBATION_SCALE.sqrt();
    let dtheta: Vec<f64> = (0..n)
        .map(|_| std * rng_theta.sample::<f64, _>(StandardNormal))
        .collect();
    let mut dg = h.matvec(&dtheta);
    if noisy {
        let power: f64 = dg.iter().map(|v| v * v).sum();
        let noise_std = (power * 100.0 / n as f64).sqrt();
        for v in dg.iter_mut() {
            *v += noise_std * rng_noise.sample::<f64, _>(StandardNormal);
        }
    }
    PerturbationPair::new(dtheta, dg)
}

fn run_c3(
    h: &Matrix,
    noisy: bool,
    iterations: usize,
    seed: u64,
    mut probe: impl FnMut(usize, &TriFactor),
) -> TriFactor {
    let mut rng_theta = ChaCha8Rng::seed_from_u64(seed);
    rng_theta.set_stream(1);
    let mut rng_noise = ChaCha8Rng::seed_from_u64(seed);
    rng_noise.set_stream(2);
    let mut f = TriFactor::identity(h.rows());
    for t in 0..iterations {
        let pair = draw_pair(h, noisy, &mut rng_theta, &mut rng_noise);
        let grad = f.relative_gradient(Criterion::C3, &pair.dtheta, &pair.dg);
        f = f.updated(&grad, 0.01, StepNorm::MaxAbs);
        probe(t, &f);
    }
    f
}

#[test]
fn noise_free_estimator_reaches_oracle_quality() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let h = make_hessian(true, 1.0, &mut rng);
    let f = run_c3(&h, false, 20_000, 7, |_, _| {});
    let report = quality(&h, &f.preconditioner()).unwrap();
    assert!(
        report.mean_abs_eig > 0.9 && report.mean_abs_eig < 1.1,
        "mean absolute eigenvalue {} off unity",
        report.mean_abs_eig
    );
    // Sanity: the ideal preconditioner pins the mean at exactly 1.
    let ideal = ideal_precond(&h).unwrap();
    let ideal_report = quality(&h, &ideal).unwrap();
    assert!((ideal_report.mean_abs_eig - 1.0).abs() <= 1e-8);
}

#[test]
fn noisy_estimator_damps_the_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let h = make_hessian(true, 1.0, &mut rng);
    let f = run_c3(&h, true, 20_000, 11, |_, _| {});
    let report = quality(&h, &f.preconditioner()).unwrap();
    assert!(
        report.mean_abs_eig < 1.0,
        "noisy estimation should shrink eigenvalues, got {}",
        report.mean_abs_eig
    );
    assert!(
        report.noise_gain > 1.0,
        "noisy estimation should suppress noise, got gain {}",
        report.noise_gain
    );
}

#[test]
fn estimation_is_scale_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let h_small = make_hessian(false, 1.0, &mut rng).scale(1e-12);
    let h_large = h_small.scale(1e24);

    let count_until_normalized = |h: &Matrix| {
        let mut hit = None;
        run_c3(h, false, 20_000, 17, |t, f| {
            if hit.is_none() && t % 25 == 0 {
                let r = quality(h, &f.preconditioner()).unwrap();
                if r.mean_abs_eig >= 0.5 && r.mean_abs_eig <= 2.0 {
                    hit = Some(t);
                }
            }
        });
        hit.expect("estimator never normalized the eigenvalues")
    };

    let c_small = count_until_normalized(&h_small) as f64;
    let c_large = count_until_normalized(&h_large) as f64;
    let ratio = (c_small.max(1.0) / c_large.max(1.0)).max(c_large.max(1.0) / c_small.max(1.0));
    assert!(
        ratio <= 2.0,
        "iteration counts {c_small} vs {c_large} differ by more than 2x"
    );
}

#[test]
fn converged_preconditioner_gives_newton_like_contraction() {
    // With P close to H^{-1}, theta shrinks by about (1 - mu) per step,
    // matching the explicit iteration with the ideal preconditioner.
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let h = make_hessian(true, 1.0, &mut rng);
    let f = run_c3(&h, false, 20_000, 23, |_, _| {});

    let mu = 0.2;
    let mut theta: Vec<f64> = (0..h.rows()).map(|i| (i as f64 * 0.7).sin() + 1.0).collect();
    let norm0: f64 = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let steps = 10;
    for _ in 0..steps {
        let g = h.matvec(&theta);
        let pg = f.apply(&g);
        for (t, d) in theta.iter_mut().zip(pg) {
            *t -= mu * d;
        }
    }
    let norm1: f64 = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let measured_rate = (norm1 / norm0).powf(1.0 / steps as f64);
    assert!(
        (measured_rate - (1.0 - mu)).abs() < 0.05,
        "contraction rate {measured_rate} should be near {}",
        1.0 - mu
    );
}
