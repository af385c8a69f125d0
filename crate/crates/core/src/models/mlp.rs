//! Feedforward tanh networks with bias columns and three selectable losses:
//! cross entropy (sigmoid form for a single output, softmax otherwise), a
//! smoothed multi-class hinge, and mean squared error.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{SampleBatch, Targets};
use crate::linalg::Matrix;
use crate::psgd::GradientSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    /// sqrt(max(max_{j != y} o_j + 1 - o_y, 0)^2 + 0.01) - 0.1, a smoothed
    /// multi-class hinge that stays zero on the satisfied branch.
    ModifiedHinge,
    Mse,
}

/// Fully-connected network; layer l maps in_l inputs (plus a bias unit) to
/// out_l nodes through tanh, with a linear output layer.
#[derive(Debug, Clone)]
pub struct MlpModel {
    widths: Vec<usize>,
    loss: LossKind,
}

impl MlpModel {
    pub fn new(widths: Vec<usize>, loss: LossKind) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        assert!(widths.iter().all(|&w| w >= 1));
        if loss == LossKind::ModifiedHinge {
            assert!(
                *widths.last().unwrap() >= 2,
                "hinge loss needs at least two outputs"
            );
        }
        MlpModel { widths, loss }
    }

    /// 2-100-1 tanh network with sigmoid cross entropy; 401 parameters.
    pub fn zebra() -> Self {
        MlpModel::new(vec![2, 100, 1], LossKind::CrossEntropy)
    }

    /// Logistic regression on 28x28 images.
    pub fn mnist_linear() -> Self {
        MlpModel::new(vec![784, 10], LossKind::CrossEntropy)
    }

    pub fn mnist_mlp2() -> Self {
        MlpModel::new(vec![784, 300, 10], LossKind::CrossEntropy)
    }

    pub fn mnist_mlp3_hinge() -> Self {
        MlpModel::new(vec![784, 300, 100, 10], LossKind::ModifiedHinge)
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Per-layer (rows, cols) shapes; the bias lives in the last column.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.widths
            .windows(2)
            .map(|w| (w[1], w[0] + 1))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c).sum()
    }

    /// Layer weights are N(0, 1/fan_in) with fan_in counting the bias unit.
    /// Deterministic per seed.
    pub fn init_parameters(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(self.param_count());
        for (rows, cols) in self.layer_shapes() {
            let std = 1.0 / (cols as f64).sqrt();
            for _ in 0..rows * cols {
                theta.push(std * rng.sample::<f64, _>(StandardNormal));
            }
        }
        theta
    }

    /// Splits the flat parameter vector into per-layer matrices. Each layer
    /// occupies a contiguous column-major slice, matching the Kronecker
    /// block convention of the preconditioner layouts.
    pub fn unpack(&self, theta: &[f64]) -> Vec<Matrix> {
        assert_eq!(theta.len(), self.param_count(), "parameter count mismatch");
        let mut layers = Vec::new();
        let mut offset = 0;
        for (rows, cols) in self.layer_shapes() {
            layers.push(crate::linalg::unvec_cols(
                &theta[offset..offset + rows * cols],
                rows,
                cols,
            ));
            offset += rows * cols;
        }
        layers
    }

    fn pack(&self, grads: &[Matrix]) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.param_count());
        for g in grads {
            theta.extend_from_slice(&crate::linalg::vec_cols(g));
        }
        theta
    }

    /// Network outputs (logits) for a batch of inputs.
    pub fn logits(&self, theta: &[f64], inputs: &Matrix) -> Matrix {
        let layers = self.unpack(theta);
        let (logits, _) = forward(&layers, inputs);
        logits
    }

    /// Predicted class per row: argmax for multi-class outputs, threshold at
    /// zero for the single-output sigmoid form.
    pub fn predict(&self, theta: &[f64], inputs: &Matrix) -> Vec<usize> {
        let z = self.logits(theta, inputs);
        (0..z.rows())
            .map(|i| {
                let row = z.row(i);
                if row.len() == 1 {
                    usize::from(row[0] > 0.0)
                } else {
                    row.iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .map(|(j, _)| j)
                        .unwrap()
                }
            })
            .collect()
    }

    pub fn classification_error(&self, theta: &[f64], inputs: &Matrix, labels: &[usize]) -> f64 {
        let pred = self.predict(theta, inputs);
        let wrong = pred
            .iter()
            .zip(labels)
            .filter(|(p, l)| p != l)
            .count();
        wrong as f64 / labels.len() as f64
    }
}

/// Appends a bias column of ones.
fn augment(a: &Matrix) -> Matrix {
    let mut ab = Matrix::zeros(a.rows(), a.cols() + 1);
    for i in 0..a.rows() {
        let row = ab.row_mut(i);
        row[..a.cols()].copy_from_slice(a.row(i));
        row[a.cols()] = 1.0;
    }
    ab
}

/// Forward pass; returns the final logits and the per-layer augmented
/// activations needed for backpropagation.
fn forward(layers: &[Matrix], inputs: &Matrix) -> (Matrix, Vec<Matrix>) {
    let mut augmented = Vec::with_capacity(layers.len());
    let mut a = inputs.clone();
    for (l, w) in layers.iter().enumerate() {
        let ab = augment(&a);
        let mut z = ab.matmul_bt(w);
        augmented.push(ab);
        if l + 1 < layers.len() {
            for v in z.as_mut_slice() {
                *v = v.tanh();
            }
            a = z;
        } else {
            return (z, augmented);
        }
    }
    unreachable!("network has at least one layer")
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl GradientSource for MlpModel {
    type Batch = SampleBatch;

    fn dim(&self) -> usize {
        self.param_count()
    }

    fn loss_and_gradient(&self, theta: &[f64], batch: &SampleBatch) -> (f64, Vec<f64>) {
        let layers = self.unpack(theta);
        let b = batch.inputs.rows();
        assert!(b > 0, "empty batch");
        let (logits, augmented) = forward(&layers, &batch.inputs);
        let out = logits.cols();
        let inv_b = 1.0 / b as f64;

        // Loss head: batch-mean loss and dL/dlogits.
        let mut loss = 0.0;
        let mut dz = Matrix::zeros(b, out);
        match (self.loss, &batch.targets) {
            (LossKind::CrossEntropy, Targets::Labels(labels)) => {
                assert_eq!(labels.len(), b);
                if out == 1 {
                    for i in 0..b {
                        let z = logits[(i, 0)];
                        let y = labels[i] as f64;
                        debug_assert!(labels[i] <= 1);
                        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
                        dz[(i, 0)] = (sigmoid(z) - y) * inv_b;
                    }
                } else {
                    for i in 0..b {
                        let row = logits.row(i);
                        let y = labels[i];
                        assert!(y < out, "label out of range");
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = row.iter().map(|z| (z - m).exp()).sum();
                        loss += m + sum.ln() - row[y];
                        for j in 0..out {
                            let p = (row[j] - m).exp() / sum;
                            dz[(i, j)] = (p - if j == y { 1.0 } else { 0.0 }) * inv_b;
                        }
                    }
                }
            }
            (LossKind::ModifiedHinge, Targets::Labels(labels)) => {
                assert_eq!(labels.len(), b);
                for i in 0..b {
                    let row = logits.row(i);
                    let y = labels[i];
                    assert!(y < out, "label out of range");
                    // Runner-up with ties broken toward the lowest index.
                    let mut jstar = usize::MAX;
                    let mut best = f64::NEG_INFINITY;
                    for (j, &v) in row.iter().enumerate() {
                        if j != y && v > best {
                            best = v;
                            jstar = j;
                        }
                    }
                    let margin = best + 1.0 - row[y];
                    let rectified = margin.max(0.0);
                    loss += (rectified * rectified + 0.01).sqrt() - 0.1;
                    if margin > 0.0 {
                        let d = rectified / (rectified * rectified + 0.01).sqrt();
                        dz[(i, jstar)] += d * inv_b;
                        dz[(i, y)] -= d * inv_b;
                    }
                }
            }
            (LossKind::Mse, Targets::Values(values)) => {
                assert_eq!(values.rows(), b);
                assert_eq!(values.cols(), out);
                for i in 0..b {
                    for j in 0..out {
                        let e = logits[(i, j)] - values[(i, j)];
                        loss += e * e;
                        dz[(i, j)] = 2.0 * e * inv_b;
                    }
                }
            }
            (kind, _) => panic!("loss {kind:?} is incompatible with the batch targets"),
        }
        loss *= inv_b;

        // Backward pass.
        let mut grads: Vec<Matrix> = Vec::with_capacity(layers.len());
        let mut delta = dz;
        for l in (0..layers.len()).rev() {
            grads.push(delta.matmul_at(&augmented[l]));
            if l > 0 {
                let dab = delta.matmul(&layers[l]);
                let act = &augmented[l];
                let in_cols = act.cols() - 1;
                let mut prev = Matrix::zeros(b, in_cols);
                for i in 0..b {
                    let arow = act.row(i);
                    let drow = dab.row(i);
                    let prow = prev.row_mut(i);
                    for j in 0..in_cols {
                        prow[j] = drow[j] * (1.0 - arow[j] * arow[j]);
                    }
                }
                delta = prev;
            }
        }
        grads.reverse();
        (loss, self.pack(&grads))
    }
}
