//! Constant-modulus blind equalizer: an adaptive FIR filter trained to
//! restore the modulus of the source symbols without access to them.

use thiserror::Error;

use crate::data::{Channel, WindowBatch};
use crate::linalg::dot;
use crate::psgd::GradientSource;

/// Dispersion constant for a source uniform on [-1, 1]:
/// R = E[s^4] / E[s^2] = (1/5) / (1/3).
pub const UNIFORM_DISPERSION: f64 = 0.6;

/// CMA-2 cost (y^2 - R)^2 over tapped-delay-line windows.
#[derive(Debug, Clone)]
pub struct EqualizerModel {
    taps: usize,
    dispersion: f64,
}

impl Default for EqualizerModel {
    fn default() -> Self {
        EqualizerModel {
            taps: 21,
            dispersion: UNIFORM_DISPERSION,
        }
    }
}

impl EqualizerModel {
    pub fn new(taps: usize, dispersion: f64) -> Self {
        assert!(taps >= 1 && dispersion > 0.0);
        EqualizerModel { taps, dispersion }
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    /// Center-spike initialization: a single unit tap in the middle.
    pub fn initial_taps(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.taps];
        w[self.taps / 2] = 1.0;
        w
    }
}

impl GradientSource for EqualizerModel {
    type Batch = WindowBatch;

    fn dim(&self) -> usize {
        self.taps
    }

    fn loss_and_gradient(&self, theta: &[f64], batch: &WindowBatch) -> (f64, Vec<f64>) {
        assert_eq!(theta.len(), self.taps);
        let b = batch.batch_size();
        assert!(b > 0, "empty batch");
        let r = self.dispersion;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.taps];
        for i in 0..b {
            let x = batch.windows.row(i);
            let y = dot(theta, x);
            let e = y * y - r;
            loss += e * e;
            let c = 4.0 * e * y;
            for (g, &xv) in grad.iter_mut().zip(x) {
                *g += c * xv;
            }
        }
        let inv = 1.0 / b as f64;
        for g in grad.iter_mut() {
            *g *= inv;
        }
        (loss * inv, grad)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsiError {
    #[error("combined channel-equalizer response is identically zero")]
    ZeroResponse,
}

/// Intersymbol interference of the combined channel-equalizer response:
/// sum(c_i^2) / max(c_i^2) - 1, zero exactly for a single-spike response.
pub fn isi(w: &[f64]) -> Result<f64, IsiError> {
    let h = Channel::impulse_response();
    isi_with_response(w, &h)
}

/// Same, with an explicit channel impulse response.
pub fn isi_with_response(w: &[f64], h: &[f64]) -> Result<f64, IsiError> {
    let mut c = vec![0.0; h.len() + w.len() - 1];
    for (k, &hv) in h.iter().enumerate() {
        if hv == 0.0 {
            continue;
        }
        for (j, &wv) in w.iter().enumerate() {
            c[k + j] += hv * wv;
        }
    }
    let max_sq = c.iter().fold(0.0f64, |m, v| m.max(v * v));
    if max_sq == 0.0 {
        return Err(IsiError::ZeroResponse);
    }
    let sum_sq: f64 = c.iter().map(|v| v * v).sum();
    Ok(sum_sq / max_sq - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn zero_taps_sit_at_a_stationary_point() {
        let model = EqualizerModel::default();
        let windows = Matrix::from_fn(4, 21, |i, j| ((i + j) as f64 * 0.1).sin());
        let batch = WindowBatch { windows };
        let (loss, grad) = model.loss_and_gradient(&vec![0.0; 21], &batch);
        assert!((loss - UNIFORM_DISPERSION * UNIFORM_DISPERSION).abs() < 1e-15);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn scalar_on_the_modulus() {
        let model = EqualizerModel::new(1, 1.0);
        let batch = WindowBatch {
            windows: Matrix::from_rows(&[&[1.0]]).unwrap(),
        };
        let (loss, grad) = model.loss_and_gradient(&[1.0], &batch);
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0]);
    }

    #[test]
    fn isi_of_single_spike_is_zero() {
        let c = vec![0.0, 2.5, 0.0];
        let w = vec![1.0];
        assert_eq!(isi_with_response(&w, &c).unwrap(), 0.0);
    }

    #[test]
    fn isi_two_equal_taps() {
        // c = (1, 1): 2/1 - 1 = 1.
        assert!((isi_with_response(&[1.0], &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn isi_is_scale_invariant() {
        let h = Channel::impulse_response();
        let w: Vec<f64> = (0..21).map(|k| ((k as f64) * 0.7).cos() * 0.2).collect();
        let a = isi_with_response(&w, &h).unwrap();
        let w2: Vec<f64> = w.iter().map(|v| v * -3.7).collect();
        let b = isi_with_response(&w2, &h).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn initial_isi_matches_channel_isi() {
        // A center spike passes the channel response through unchanged, so
        // the combined ISI equals the channel's own.
        let model = EqualizerModel::default();
        let h = Channel::impulse_response();
        let w = model.initial_taps();
        let combined = isi_with_response(&w, &h).unwrap();
        let channel_only = isi_with_response(&[1.0], &h).unwrap();
        assert!((combined - channel_only).abs() < 1e-12);
    }

    #[test]
    fn all_zero_response_is_an_error() {
        assert_eq!(
            isi_with_response(&[0.0, 0.0], &[1.0, 2.0]),
            Err(IsiError::ZeroResponse)
        );
    }
}
