//! Recursive simulation of the rational communication channel
//! h(z^-1) = (-0.8 + z^-2) / (1 + 0.8 z^-2) and the window stream feeding
//! the blind equalizer.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::WindowBatch;
use crate::linalg::Matrix;

/// IIR channel state implementing y[n] = -0.8 x[n] + x[n-2] - 0.8 y[n-2].
#[derive(Debug, Clone, Default)]
pub struct Channel {
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Channel {
    pub fn new() -> Self {
        Channel::default()
    }

    /// Feeds one input sample and returns the channel output.
    pub fn step(&mut self, x: f64) -> f64 {
        let y = -0.8 * x + self.x2 - 0.8 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }

    /// Impulse response truncated where |h[k]| stays below 1e-12. The
    /// magnitude envelope decays by 0.8 every two samples, so roughly 256
    /// taps carry everything representable in double precision.
    pub fn impulse_response() -> Vec<f64> {
        let mut ch = Channel::new();
        let mut h = Vec::new();
        let mut tail_small = 0;
        for k in 0..4096 {
            let x = if k == 0 { 1.0 } else { 0.0 };
            let y = ch.step(x);
            h.push(y);
            if y.abs() < 1e-12 {
                tail_small += 1;
                if tail_small >= 4 && k > 2 {
                    break;
                }
            } else {
                tail_small = 0;
            }
        }
        while let Some(&last) = h.last() {
            if last.abs() < 1e-12 {
                h.pop();
            } else {
                break;
            }
        }
        h
    }
}

/// Continuously-running channel simulation emitting batches of
/// tapped-delay-line windows. The channel state persists across batches and
/// the source symbols are uniform on [-1, 1].
pub struct EqualizerStream {
    channel: Channel,
    rng: ChaCha8Rng,
    taps: usize,
    batch_size: usize,
    history: Vec<f64>,
}

impl EqualizerStream {
    pub fn new(taps: usize, batch_size: usize, seed: u64) -> Self {
        let mut s = EqualizerStream {
            channel: Channel::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            taps,
            batch_size,
            history: vec![0.0; taps],
        };
        // Fill the delay line so the first windows are fully populated.
        for _ in 0..taps {
            s.advance();
        }
        s
    }

    fn advance(&mut self) {
        let x = 2.0 * self.rng.random::<f64>() - 1.0;
        let y = self.channel.step(x);
        self.history.rotate_right(1);
        self.history[0] = y;
    }
}

impl Iterator for EqualizerStream {
    type Item = WindowBatch;

    fn next(&mut self) -> Option<WindowBatch> {
        let mut windows = Matrix::zeros(self.batch_size, self.taps);
        for i in 0..self.batch_size {
            self.advance();
            windows.row_mut(i).copy_from_slice(&self.history);
        }
        Some(WindowBatch { windows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_response_leading_terms() {
        let h = Channel::impulse_response();
        assert!((h[0] + 0.8).abs() < 1e-15);
        assert_eq!(h[1], 0.0);
        assert!((h[2] - 1.64).abs() < 1e-15);
        assert_eq!(h[3], 0.0);
        assert!((h[4] + 1.312).abs() < 1e-15);
        // Geometric tail: h[2k] = -0.8 h[2k-2] for k >= 2.
        assert!((h[6] + 0.8 * h[4]).abs() < 1e-15);
        let tail = h.last().unwrap().abs();
        assert!(tail >= 1e-12 && h.len() > 200);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let mut ch = Channel::new();
        for _ in 0..32 {
            assert_eq!(ch.step(0.0), 0.0);
        }
    }

    #[test]
    fn stream_output_variance_matches_filter_energy() {
        // Var(y) = sum h[k]^2 * Var(source) with Var(U[-1,1]) = 1/3.
        let energy: f64 = Channel::impulse_response().iter().map(|v| v * v).sum();
        let expected = energy / 3.0;
        let mut stream = EqualizerStream::new(21, 100, 17);
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for _ in 0..2000 {
            let batch = stream.next().unwrap();
            for i in 0..batch.batch_size() {
                let v = batch.windows[(i, 0)];
                sum_sq += v * v;
                count += 1;
            }
        }
        let measured = sum_sq / count as f64;
        assert!(
            (measured - expected).abs() < 0.05 * expected,
            "variance {measured} vs {expected}"
        );
    }

    #[test]
    fn stream_is_deterministic_per_seed() {
        let a = EqualizerStream::new(21, 10, 3).next().unwrap();
        let b = EqualizerStream::new(21, 10, 3).next().unwrap();
        assert_eq!(a.windows.as_slice(), b.windows.as_slice());
    }

    #[test]
    fn windows_shift_by_one_sample() {
        let mut stream = EqualizerStream::new(21, 2, 3);
        let batch = stream.next().unwrap();
        // Consecutive windows share 20 samples, shifted by one.
        for k in 0..20 {
            assert_eq!(batch.windows[(1, k + 1)], batch.windows[(0, k)]);
        }
    }
}
