//! Dataset generation and ingestion: the zebra-pattern sampler, the
//! addition-problem sequence generator, the recursive channel simulation
//! behind the equalizer stream, an IDX reader with normalization, and a
//! with-replacement mini-batch sampler.

mod channel;
pub mod idx;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;

pub use channel::{Channel, EqualizerStream};
pub use idx::{load_idx, IdxDataset, IdxError};

/// Classification or regression targets of a mini-batch.
#[derive(Debug, Clone)]
pub enum Targets {
    Labels(Vec<usize>),
    Values(Matrix),
}

/// Mini-batch of feature rows with targets.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    /// batch_size x feature_dim.
    pub inputs: Matrix,
    pub targets: Targets,
}

impl SampleBatch {
    pub fn batch_size(&self) -> usize {
        self.inputs.rows()
    }
}

/// Mini-batch of input sequences with scalar regression targets.
#[derive(Debug, Clone)]
pub struct SeqBatch {
    /// Each sequence is 2 x length: a value row and a marker row.
    pub sequences: Vec<Matrix>,
    pub targets: Vec<f64>,
}

impl SeqBatch {
    pub fn batch_size(&self) -> usize {
        self.sequences.len()
    }
}

/// Mini-batch of tapped-delay-line windows for the equalizer.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    /// batch_size x taps, newest sample first within each row.
    pub windows: Matrix,
}

impl WindowBatch {
    pub fn batch_size(&self) -> usize {
        self.windows.rows()
    }
}

/// Zebra-stripe class label: the parity of round(10^x1 - 10^x2), mapped to
/// its nonnegative representative.
pub fn zebra_label(x1: f64, x2: f64) -> usize {
    let r = (10f64.powf(x1) - 10f64.powf(x2)).round() as i64;
    (r.rem_euclid(2)) as usize
}

/// Online generator of zebra-classification batches. Raw features are
/// uniform on [0, 1]^2; emitted features are affinely normalized to [-1, 1].
pub struct ZebraSampler {
    rng: ChaCha8Rng,
    batch_size: usize,
}

impl ZebraSampler {
    pub fn new(batch_size: usize, seed: u64) -> Self {
        ZebraSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            batch_size,
        }
    }

    /// Draws one labelled point; returns (normalized features, label).
    pub fn sample(&mut self) -> ([f64; 2], usize) {
        let x1: f64 = self.rng.random();
        let x2: f64 = self.rng.random();
        let label = zebra_label(x1, x2);
        ([2.0 * x1 - 1.0, 2.0 * x2 - 1.0], label)
    }
}

impl Iterator for ZebraSampler {
    type Item = SampleBatch;

    fn next(&mut self) -> Option<SampleBatch> {
        let mut inputs = Matrix::zeros(self.batch_size, 2);
        let mut labels = Vec::with_capacity(self.batch_size);
        for i in 0..self.batch_size {
            let (x, y) = self.sample();
            inputs[(i, 0)] = x[0];
            inputs[(i, 1)] = x[1];
            labels.push(y);
        }
        Some(SampleBatch {
            inputs,
            targets: Targets::Labels(labels),
        })
    }
}

/// One addition-problem sequence: the first row holds values uniform on
/// [-0.5, 0.5], the second row is zero except for ones at two distinct
/// marker positions, and the target is the sum of the two marked values.
pub fn addition_sequence(rng: &mut ChaCha8Rng, length: usize) -> (Matrix, f64) {
    assert!(length >= 2, "addition sequences need at least two positions");
    let mut seq = Matrix::zeros(2, length);
    for t in 0..length {
        seq[(0, t)] = rng.random::<f64>() - 0.5;
    }
    let p1 = rng.random_range(0..length);
    let mut p2 = rng.random_range(0..length - 1);
    if p2 >= p1 {
        p2 += 1;
    }
    seq[(1, p1)] = 1.0;
    seq[(1, p2)] = 1.0;
    let target = seq[(0, p1)] + seq[(0, p2)];
    (seq, target)
}

/// Online generator of addition-problem batches.
pub struct AdditionSampler {
    rng: ChaCha8Rng,
    batch_size: usize,
    length: usize,
}

impl AdditionSampler {
    pub fn new(batch_size: usize, length: usize, seed: u64) -> Self {
        AdditionSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            batch_size,
            length,
        }
    }
}

impl Iterator for AdditionSampler {
    type Item = SeqBatch;

    fn next(&mut self) -> Option<SeqBatch> {
        let mut sequences = Vec::with_capacity(self.batch_size);
        let mut targets = Vec::with_capacity(self.batch_size);
        for _ in 0..self.batch_size {
            let (seq, target) = addition_sequence(&mut self.rng, self.length);
            sequences.push(seq);
            targets.push(target);
        }
        Some(SeqBatch { sequences, targets })
    }
}

/// Uniform with-replacement mini-batch sampler over an IDX dataset.
pub struct BatchSampler<'a> {
    dataset: &'a IdxDataset,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl<'a> BatchSampler<'a> {
    pub fn new(dataset: &'a IdxDataset, batch_size: usize, seed: u64) -> Self {
        assert!(dataset.len() > 0, "cannot sample from an empty dataset");
        assert!(
            batch_size <= dataset.len(),
            "batch size exceeds dataset size"
        );
        BatchSampler {
            dataset,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Iterator for BatchSampler<'_> {
    type Item = SampleBatch;

    fn next(&mut self) -> Option<SampleBatch> {
        let d = self.dataset.feature_dim();
        let mut inputs = Matrix::zeros(self.batch_size, d);
        let mut labels = Vec::with_capacity(self.batch_size);
        for i in 0..self.batch_size {
            let idx = self.rng.random_range(0..self.dataset.len());
            self.dataset.write_normalized_image(idx, inputs.row_mut(i));
            labels.push(self.dataset.label(idx) as usize);
        }
        Some(SampleBatch {
            inputs,
            targets: Targets::Labels(labels),
        })
    }
}
