//! Reader and writer for the IDX binary container used by the MNIST
//! distribution: big-endian magic, counts, and dimension header followed by
//! raw bytes. Images use magic 2051, labels 2049.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("io error on {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: bad magic number: expected {expected}, got {got}")]
    BadMagic { file: String, expected: u32, got: u32 },
    #[error("{file}: truncated: expected {expected} bytes of {what}, got {got}")]
    Truncated {
        file: String,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
}

/// Loaded image/label pair with on-demand normalization of pixels into
/// [-1, 1].
#[derive(Debug, Clone)]
pub struct IdxDataset {
    images: Vec<u8>,
    labels: Vec<u8>,
    count: usize,
    rows: usize,
    cols: usize,
}

impl IdxDataset {
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let d = self.feature_dim();
        &self.images[i * d..(i + 1) * d]
    }

    /// Pixel p in [0, 255] maps to 2 p / 255 - 1.
    pub fn write_normalized_image(&self, i: usize, out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(self.image_bytes(i)) {
            *o = 2.0 * (p as f64) / 255.0 - 1.0;
        }
    }

    pub fn normalized_image(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.feature_dim()];
        self.write_normalized_image(i, &mut v);
        v
    }

    /// Keeps only the first `n` items. Used for desk-scale subsets.
    pub fn truncate(&mut self, n: usize) {
        if n < self.count {
            self.count = n;
            self.images.truncate(n * self.feature_dim());
            self.labels.truncate(n);
        }
    }
}

fn read_u32_be(file: &str, bytes: &[u8], offset: usize, what: &'static str) -> Result<u32, IdxError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(IdxError::Truncated {
            file: file.to_string(),
            what,
            expected: end,
            got: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an image file and a label file, validating magics, header
/// completeness, payload sizes, and the count agreement between the two.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<IdxDataset, IdxError> {
    let ipath = images_path.as_ref().display().to_string();
    let lpath = labels_path.as_ref().display().to_string();
    let ibytes = fs::read(images_path.as_ref()).map_err(|source| IdxError::Io {
        file: ipath.clone(),
        source,
    })?;
    let lbytes = fs::read(labels_path.as_ref()).map_err(|source| IdxError::Io {
        file: lpath.clone(),
        source,
    })?;

    let magic = read_u32_be(&ipath, &ibytes, 0, "image header")?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::BadMagic {
            file: ipath,
            expected: IMAGES_MAGIC,
            got: magic,
        });
    }
    let count = read_u32_be(&ipath, &ibytes, 4, "image count")? as usize;
    let rows = read_u32_be(&ipath, &ibytes, 8, "image rows")? as usize;
    let cols = read_u32_be(&ipath, &ibytes, 12, "image cols")? as usize;
    let expected = 16 + count * rows * cols;
    if ibytes.len() < expected {
        return Err(IdxError::Truncated {
            file: ipath,
            what: "pixel data",
            expected,
            got: ibytes.len(),
        });
    }

    let magic = read_u32_be(&lpath, &lbytes, 0, "label header")?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::BadMagic {
            file: lpath,
            expected: LABELS_MAGIC,
            got: magic,
        });
    }
    let lcount = read_u32_be(&lpath, &lbytes, 4, "label count")? as usize;
    let lexpected = 8 + lcount;
    if lbytes.len() < lexpected {
        return Err(IdxError::Truncated {
            file: lpath,
            what: "label data",
            expected: lexpected,
            got: lbytes.len(),
        });
    }
    if count != lcount {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: lcount,
        });
    }

    Ok(IdxDataset {
        images: ibytes[16..expected].to_vec(),
        labels: lbytes[8..lexpected].to_vec(),
        count,
        rows,
        cols,
    })
}

/// Writes an IDX image file (magic 2051) with the standard header layout.
pub fn write_idx_images(
    path: impl AsRef<Path>,
    rows: usize,
    cols: usize,
    images: &[u8],
) -> std::io::Result<()> {
    assert_eq!(images.len() % (rows * cols), 0, "ragged image payload");
    let count = images.len() / (rows * cols);
    let mut f = fs::File::create(path)?;
    f.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    f.write_all(&(count as u32).to_be_bytes())?;
    f.write_all(&(rows as u32).to_be_bytes())?;
    f.write_all(&(cols as u32).to_be_bytes())?;
    f.write_all(images)?;
    Ok(())
}

/// Writes an IDX label file (magic 2049).
pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}
