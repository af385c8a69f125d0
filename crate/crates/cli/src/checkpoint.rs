//! Length-prefixed binary checkpoints with a version tag and a CRC32
//! trailer. A checkpoint captures the complete optimizer state (parameters,
//! every factor of the layout, step-size settings, random-stream position,
//! iteration counter) plus the experiment tag and effective seed, so a
//! resumed run continues the exact trace.

use std::fs;
use std::path::Path;

use thiserror::Error;

use psgd_core::linalg::Matrix;
use psgd_core::precond::{
    Block, Criterion, KronFactor, LimitedMemoryTriFactor, PreconditionerLayout, StepNorm,
    TriFactor,
};
use psgd_core::psgd::{OptimizerSettings, OptimizerState, RngState};

const MAGIC: &[u8; 4] = b"PSGD";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("incompatible checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint holds experiment `{found}`, config asks for `{expected}`")]
    ExperimentMismatch { found: String, expected: String },
    #[error("invalid state in checkpoint: {0}")]
    InvalidState(String),
}

/// Everything needed to continue a run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub experiment: String,
    pub seed: u64,
    pub state: OptimizerState,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }

    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        for x in m.as_slice() {
            self.f64(*x);
        }
    }
}

struct ReaderBuf<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ReaderBuf<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Corrupt(format!(
                "unexpected end of data at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128, CheckpointError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len_prefixed(&mut self, what: &str, cap: u64) -> Result<usize, CheckpointError> {
        let n = self.u64()?;
        if n > cap {
            return Err(CheckpointError::Corrupt(format!(
                "{what} length {n} exceeds sane bound {cap}"
            )));
        }
        Ok(n as usize)
    }

    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.len_prefixed("vector", 1 << 32)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn matrix(&mut self) -> Result<Matrix, CheckpointError> {
        let rows = self.len_prefixed("matrix rows", 1 << 20)?;
        let cols = self.len_prefixed("matrix cols", 1 << 20)?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64()?);
        }
        if rows == 0 || cols == 0 {
            return Err(CheckpointError::Corrupt("empty matrix".into()));
        }
        Ok(Matrix::from_parts(rows, cols, data))
    }
}

fn criterion_tag(c: Option<Criterion>) -> u8 {
    match c {
        None => 0,
        Some(Criterion::C1) => 1,
        Some(Criterion::C2) => 2,
        Some(Criterion::C3) => 3,
    }
}

fn criterion_from_tag(t: u8) -> Result<Option<Criterion>, CheckpointError> {
    Ok(match t {
        0 => None,
        1 => Some(Criterion::C1),
        2 => Some(Criterion::C2),
        3 => Some(Criterion::C3),
        _ => return Err(CheckpointError::Corrupt(format!("criterion tag {t}"))),
    })
}

pub fn save(path: &Path, experiment: &str, seed: u64, state: &OptimizerState) -> Result<(), CheckpointError> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.bytes(experiment.as_bytes());
    w.u64(seed);

    let s = state.settings();
    w.u8(criterion_tag(s.criterion));
    w.u8(match s.norm {
        StepNorm::MaxAbs => 0,
        StepNorm::MaxAbsDiag => 1,
    });
    w.f64(s.mu_theta0);
    w.f64(s.mu_q0);
    w.f64(s.perturbation_scale);
    w.u64(s.update_every);
    w.u64(state.iteration());

    let rng = state.rng_state();
    w.buf.extend_from_slice(&rng.seed);
    w.u64(rng.stream);
    w.u128(rng.word_pos);

    w.f64s(state.theta());

    let blocks = state.layout().blocks();
    w.u64(blocks.len() as u64);
    for b in blocks {
        match b {
            Block::Dense(f) => {
                w.u8(0);
                w.matrix(f.matrix());
            }
            Block::Kron(k) => {
                w.u8(1);
                w.matrix(k.factor1().matrix());
                w.matrix(k.factor2().matrix());
            }
            Block::LimitedMemory(l) => {
                w.u8(2);
                w.u64(l.rank() as u64);
                w.matrix(l.matrix());
            }
        }
    }

    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    fs::write(path, &w.buf).map_err(|source| CheckpointError::Io {
        file: path.display().to_string(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        file: path.display().to_string(),
        source,
    })?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let payload = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(CheckpointError::ChecksumMismatch { stored, computed });
    }

    let mut r = ReaderBuf {
        buf: payload,
        pos: 4,
    };
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let name_len = r.len_prefixed("experiment name", 256)?;
    let experiment = String::from_utf8(r.take(name_len)?.to_vec())
        .map_err(|_| CheckpointError::Corrupt("experiment name is not utf-8".into()))?;
    let seed = r.u64()?;

    let criterion = criterion_from_tag(r.u8()?)?;
    let norm = match r.u8()? {
        0 => StepNorm::MaxAbs,
        1 => StepNorm::MaxAbsDiag,
        t => return Err(CheckpointError::Corrupt(format!("norm tag {t}"))),
    };
    let settings = OptimizerSettings {
        criterion,
        norm,
        mu_theta0: r.f64()?,
        mu_q0: r.f64()?,
        perturbation_scale: r.f64()?,
        update_every: r.u64()?,
    };
    let iteration = r.u64()?;
    let mut seed_bytes = [0u8; 32];
    seed_bytes.copy_from_slice(r.take(32)?);
    let rng = RngState {
        seed: seed_bytes,
        stream: r.u64()?,
        word_pos: r.u128()?,
    };
    let theta = r.f64s()?;

    let nblocks = r.len_prefixed("block count", 1 << 16)?;
    let mut blocks = Vec::with_capacity(nblocks);
    for _ in 0..nblocks {
        let tag = r.u8()?;
        let block = match tag {
            0 => Block::Dense(
                TriFactor::from_upper(r.matrix()?)
                    .map_err(|e| CheckpointError::InvalidState(e.to_string()))?,
            ),
            1 => {
                let q1 = TriFactor::from_upper(r.matrix()?)
                    .map_err(|e| CheckpointError::InvalidState(e.to_string()))?;
                let q2 = TriFactor::from_upper(r.matrix()?)
                    .map_err(|e| CheckpointError::InvalidState(e.to_string()))?;
                Block::Kron(KronFactor::new(q1, q2))
            }
            2 => {
                let rank = r.u64()? as usize;
                Block::LimitedMemory(
                    LimitedMemoryTriFactor::from_assembled(r.matrix()?, rank)
                        .map_err(|e| CheckpointError::InvalidState(e.to_string()))?,
                )
            }
            t => return Err(CheckpointError::Corrupt(format!("block tag {t}"))),
        };
        blocks.push(block);
    }
    if r.pos != payload.len() {
        return Err(CheckpointError::Corrupt("trailing bytes".into()));
    }

    let layout = PreconditionerLayout::new(blocks);
    let state = OptimizerState::from_parts(theta, layout, settings, iteration, rng)
        .map_err(|e| CheckpointError::InvalidState(e.to_string()))?;
    Ok(Checkpoint {
        experiment,
        seed,
        state,
    })
}
