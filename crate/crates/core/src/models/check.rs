//! Central-difference gradient checking. The oracle differentiates the loss
//! value only, so it is independent of every analytic backward pass it
//! verifies.

use crate::psgd::GradientSource;

/// Central finite difference of the mini-batch loss along one coordinate.
pub fn central_difference<S: GradientSource>(
    source: &S,
    theta: &[f64],
    batch: &S::Batch,
    coord: usize,
    step: f64,
) -> f64 {
    let mut plus = theta.to_vec();
    plus[coord] += step;
    let mut minus = theta.to_vec();
    minus[coord] -= step;
    let (lp, _) = source.loss_and_gradient(&plus, batch);
    let (lm, _) = source.loss_and_gradient(&minus, batch);
    (lp - lm) / (2.0 * step)
}

/// Deterministically spread coordinate picks over the parameter vector.
pub fn pick_coordinates(dim: usize, count: usize, seed: u64) -> Vec<usize> {
    let count = count.min(dim);
    let mut picked = Vec::with_capacity(count);
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    while picked.len() < count {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let c = (x >> 33) as usize % dim;
        if !picked.contains(&c) {
            picked.push(c);
        }
    }
    picked
}

/// Largest relative error between the analytic gradient and central
/// differences over the chosen coordinates.
pub fn max_relative_error<S: GradientSource>(
    source: &S,
    theta: &[f64],
    batch: &S::Batch,
    coords: &[usize],
    step: f64,
) -> f64 {
    let (_, grad) = source.loss_and_gradient(theta, batch);
    let mut worst = 0.0f64;
    for &c in coords {
        let fd = central_difference(source, theta, batch, c, step);
        let denom = grad[c].abs().max(fd.abs()).max(1e-4);
        worst = worst.max((grad[c] - fd).abs() / denom);
    }
    worst
}

/// Panics when any checked coordinate deviates beyond `tol` relative error.
pub fn assert_gradient_matches_fd<S: GradientSource>(
    source: &S,
    theta: &[f64],
    batch: &S::Batch,
    count: usize,
    step: f64,
    tol: f64,
) {
    let coords = pick_coordinates(theta.len(), count, 0xC0FFEE);
    let err = max_relative_error(source, theta, batch, &coords, step);
    assert!(
        err <= tol,
        "analytic gradient deviates from finite differences: {err:e} > {tol:e}"
    );
}
