//! Vanilla recurrent network for the addition problem, trained by
//! backpropagation through the full sequence.
//!
//! The first layer packs as a hidden x (hidden + inputs + 1) matrix
//! [W_rec | W_in | b], the output layer as 1 x (hidden + 1) = [w_out | b].
//! With 50 hidden states and 2 inputs that is 50x53 + 1x51 = 2701
//! parameters.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::SeqBatch;
use crate::linalg::Matrix;
use crate::psgd::GradientSource;

#[derive(Debug, Clone)]
pub struct RnnModel {
    hidden: usize,
    inputs: usize,
}

impl RnnModel {
    pub fn new(hidden: usize, inputs: usize) -> Self {
        assert!(hidden >= 1 && inputs >= 1);
        RnnModel { hidden, inputs }
    }

    /// The addition-problem network: 50 hidden states, 2 input rows.
    pub fn addition() -> Self {
        RnnModel::new(50, 2)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        vec![
            (self.hidden, self.hidden + self.inputs + 1),
            (1, self.hidden + 1),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c).sum()
    }

    /// Feedforward coefficients are N(0, 0.01); the recurrent block is a
    /// random orthogonal matrix to encourage long memories.
    pub fn init_parameters(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.hidden;
        let w_rec = random_orthogonal(n, &mut rng);
        let mut w1 = Matrix::zeros(n, n + self.inputs + 1);
        for i in 0..n {
            for j in 0..n {
                w1[(i, j)] = w_rec[(i, j)];
            }
            for j in n..n + self.inputs + 1 {
                w1[(i, j)] = 0.1 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut theta = crate::linalg::vec_cols(&w1);
        for _ in 0..self.hidden + 1 {
            theta.push(0.1 * rng.sample::<f64, _>(StandardNormal));
        }
        theta
    }

    fn unpack(&self, theta: &[f64]) -> (Matrix, Matrix) {
        assert_eq!(theta.len(), self.param_count(), "parameter count mismatch");
        let (r1, c1) = self.layer_shapes()[0];
        let w1 = crate::linalg::unvec_cols(&theta[..r1 * c1], r1, c1);
        let w2 = crate::linalg::unvec_cols(&theta[r1 * c1..], 1, self.hidden + 1);
        (w1, w2)
    }

    /// The recurrent submatrix of a packed parameter vector.
    pub fn recurrent_block(&self, theta: &[f64]) -> Matrix {
        let (w1, _) = self.unpack(theta);
        let n = self.hidden;
        Matrix::from_fn(n, n, |i, j| w1[(i, j)])
    }
}

/// Orthonormalizes a random Gaussian matrix by modified Gram-Schmidt, run
/// twice for orthogonality at working precision.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    for _pass in 0..2 {
        for j in 0..n {
            for k in 0..j {
                let proj: f64 = cols[j].iter().zip(&cols[k]).map(|(a, b)| a * b).sum();
                let prev = cols[k].clone();
                for (v, p) in cols[j].iter_mut().zip(prev) {
                    *v -= proj * p;
                }
            }
            let norm: f64 = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm > 1e-8, "degenerate random matrix");
            for v in cols[j].iter_mut() {
                *v /= norm;
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| cols[j][i])
}

impl GradientSource for RnnModel {
    type Batch = SeqBatch;

    fn dim(&self) -> usize {
        self.param_count()
    }

    fn loss_and_gradient(&self, theta: &[f64], batch: &SeqBatch) -> (f64, Vec<f64>) {
        let b = batch.batch_size();
        assert!(b > 0, "empty batch");
        let t_len = batch.sequences[0].cols();
        assert!(batch.sequences.iter().all(|s| s.cols() == t_len));
        assert!(batch
            .sequences
            .iter()
            .all(|s| s.rows() == self.inputs));
        let n = self.hidden;
        let (w1, w2) = self.unpack(theta);

        // Views into the packed first layer.
        let w_rec = Matrix::from_fn(n, n, |i, j| w1[(i, j)]);
        let w_in = Matrix::from_fn(n, self.inputs, |i, j| w1[(i, n + j)]);
        let bias: Vec<f64> = (0..n).map(|i| w1[(i, n + self.inputs)]).collect();
        let w_out: Vec<f64> = (0..n).map(|j| w2[(0, j)]).collect();
        let b_out = w2[(0, n)];

        // Forward: hidden states per step, batch in columns.
        let mut states = Vec::with_capacity(t_len + 1);
        states.push(Matrix::zeros(n, b));
        let mut x_t = Matrix::zeros(self.inputs, b);
        let mut x_steps = Vec::with_capacity(t_len);
        for t in 0..t_len {
            for (s, seq) in batch.sequences.iter().enumerate() {
                for r in 0..self.inputs {
                    x_t[(r, s)] = seq[(r, t)];
                }
            }
            let mut z = w_rec.matmul(&states[t]);
            let zin = w_in.matmul(&x_t);
            for (zv, iv) in z.as_mut_slice().iter_mut().zip(zin.as_slice()) {
                *zv += iv;
            }
            for i in 0..n {
                let bi = bias[i];
                for v in z.row_mut(i) {
                    *v = (*v + bi).tanh();
                }
            }
            states.push(z);
            x_steps.push(x_t.clone());
        }

        // Output and loss.
        let last = &states[t_len];
        let mut y = vec![b_out; b];
        for i in 0..n {
            let wi = w_out[i];
            for (yv, &hv) in y.iter_mut().zip(last.row(i)) {
                *yv += wi * hv;
            }
        }
        let inv_b = 1.0 / b as f64;
        let mut loss = 0.0;
        let mut dy = vec![0.0; b];
        for (s, (&yv, &tv)) in y.iter().zip(&batch.targets).enumerate() {
            let e = yv - tv;
            loss += e * e;
            dy[s] = 2.0 * e * inv_b;
        }
        loss *= inv_b;

        // Backward through time.
        let mut d_w_rec = Matrix::zeros(n, n);
        let mut d_w_in = Matrix::zeros(n, self.inputs);
        let mut d_bias = vec![0.0; n];
        let mut d_w_out = vec![0.0; n];
        let mut d_b_out = 0.0;
        for &d in &dy {
            d_b_out += d;
        }
        let mut d_h = Matrix::zeros(n, b);
        for i in 0..n {
            let mut acc = 0.0;
            for (s, &d) in dy.iter().enumerate() {
                acc += d * last[(i, s)];
            }
            d_w_out[i] = acc;
            let row = d_h.row_mut(i);
            let wi = w_out[i];
            for (hv, &d) in row.iter_mut().zip(&dy) {
                *hv = wi * d;
            }
        }
        for t in (0..t_len).rev() {
            // dZ = dH (1 - H^2), with H the post-tanh state at step t+1.
            let h = &states[t + 1];
            let mut dz = d_h;
            for (zv, &hv) in dz.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *zv *= 1.0 - hv * hv;
            }
            let grad_rec = dz.matmul_bt(&states[t]);
            for (a, &g) in d_w_rec.as_mut_slice().iter_mut().zip(grad_rec.as_slice()) {
                *a += g;
            }
            let grad_in = dz.matmul_bt(&x_steps[t]);
            for (a, &g) in d_w_in.as_mut_slice().iter_mut().zip(grad_in.as_slice()) {
                *a += g;
            }
            for i in 0..n {
                d_bias[i] += dz.row(i).iter().sum::<f64>();
            }
            d_h = w_rec.matmul_at(&dz);
        }

        // Repack gradients in the parameter order.
        let mut d_w1 = Matrix::zeros(n, n + self.inputs + 1);
        for i in 0..n {
            for j in 0..n {
                d_w1[(i, j)] = d_w_rec[(i, j)];
            }
            for j in 0..self.inputs {
                d_w1[(i, n + j)] = d_w_in[(i, j)];
            }
            d_w1[(i, n + self.inputs)] = d_bias[i];
        }
        let mut grad = crate::linalg::vec_cols(&d_w1);
        grad.extend_from_slice(&d_w_out);
        grad.push(d_b_out);
        (loss, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AdditionSampler;
    use crate::models::check::assert_gradient_matches_fd;

    #[test]
    fn addition_network_has_2701_parameters() {
        let m = RnnModel::addition();
        assert_eq!(m.param_count(), 2701);
        assert_eq!(m.layer_shapes(), vec![(50, 53), (1, 51)]);
    }

    #[test]
    fn recurrent_block_is_orthogonal() {
        let m = RnnModel::addition();
        let theta = m.init_parameters(5);
        let w = m.recurrent_block(&theta);
        let gram = w.matmul_at(&w);
        let residual = gram.sub(&Matrix::identity(50)).max_abs();
        assert!(residual <= 1e-10, "orthogonality residual {residual:e}");
        assert_eq!(m.init_parameters(5), theta);
    }

    #[test]
    fn zero_output_weights_give_target_variance_loss() {
        // With w_out = 0 the prediction is the output bias; zeroing it too
        // makes the loss the raw second moment of the targets, about 1/6.
        let m = RnnModel::new(8, 2);
        let mut theta = m.init_parameters(1);
        let first = 8 * 11;
        for v in theta[first..].iter_mut() {
            *v = 0.0;
        }
        let batch = AdditionSampler::new(512, 25, 3).next().unwrap();
        let (loss, _) = m.loss_and_gradient(&theta, &batch);
        let second_moment: f64 = batch
            .targets
            .iter()
            .map(|t| t * t)
            .sum::<f64>()
            / batch.targets.len() as f64;
        assert_eq!(loss, second_moment);
        assert!((loss - 1.0 / 6.0).abs() < 0.05);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = RnnModel::new(6, 2);
        let theta = m.init_parameters(9);
        let batch = AdditionSampler::new(3, 12, 7).next().unwrap();
        assert_gradient_matches_fd(&m, &theta, &batch, 15, 1e-6, 1e-5);
    }
}
