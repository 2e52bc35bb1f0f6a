//! MNIST IDX reader. Files may be raw or gzip-compressed.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::tensor::{Potentials, Shape5, Spikes};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

/// Raw 0..=255 images, row-major 28 x 28 each, and their labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != labels.len() * PIXELS {
            return Err(Error::Data(format!(
                "{} pixel bytes do not hold {} images",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(Dataset { pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Images at `indices` as a `B x 1 x 1 x 28 x 28` tensor of raw values.
    pub fn gather(&self, indices: &[usize]) -> Result<Potentials> {
        let mut data = Vec::with_capacity(indices.len() * PIXELS);
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| f32::from(v)));
        }
        Potentials::from_vec(Shape5::new(indices.len(), 1, 1, SIDE, SIDE)?, data)
    }

    pub fn images(&self) -> Result<Spikes> {
        Spikes::from_vec(Shape5::new(self.len(), 1, 1, SIDE, SIDE)?, self.pixels.clone())
    }

    /// First `n` samples.
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset { pixels: self.pixels[..n * PIXELS].to_vec(), labels: self.labels[..n].to_vec() }
    }

    /// Samples `start..end`.
    pub fn range(&self, start: usize, end: usize) -> Dataset {
        let end = end.min(self.len());
        let start = start.min(end);
        Dataset {
            pixels: self.pixels[start * PIXELS..end * PIXELS].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }
}

fn open(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Data(format!("cannot decompress {}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(Error::Truncated { expected: at as u64 + 4, found: bytes.len() as u64 })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::BadMagic { expected: format!("{expected:#010x}"), found: format!("{found:#010x}") });
    }
    Ok(())
}

/// Parses an IDX image file; returns `(count, pixels)`.
pub fn parse_images(bytes: &[u8], limit: Option<usize>) -> Result<(usize, Vec<u8>)> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let (rows, cols) = (be_u32(bytes, 8)?, be_u32(bytes, 12)?);
    if rows != 28 || cols != 28 {
        return Err(Error::Data(format!("expected 28x28 images, found {rows}x{cols}")));
    }
    let n = limit.map_or(count, |l| l.min(count));
    let need = 16 + count * 784;
    if bytes.len() < need {
        return Err(Error::Truncated { expected: need as u64, found: bytes.len() as u64 });
    }
    Ok((n, bytes[16..16 + n * 784].to_vec()))
}

/// Parses an IDX label file.
pub fn parse_labels(bytes: &[u8], limit: Option<usize>) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    if bytes.len() < 8 + count {
        return Err(Error::Truncated { expected: 8 + count as u64, found: bytes.len() as u64 });
    }
    let n = limit.map_or(count, |l| l.min(count));
    Ok(bytes[8..8 + n].to_vec())
}

pub fn load_mnist(images: impl AsRef<Path>, labels: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    let img = open(images.as_ref())?;
    let lab = open(labels.as_ref())?;
    let image_count = be_u32(&img, 4)?;
    let label_count = be_u32(&lab, 4)?;
    let (n, pixels) = parse_images(&img, limit)?;
    let labels = parse_labels(&lab, limit)?;
    if image_count != label_count {
        return Err(Error::Data(format!("{image_count} images but {label_count} labels")));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Data(format!("label {bad} outside 0..=9")));
    }
    debug_assert_eq!(pixels.len(), n * PIXELS);
    Dataset::new(pixels, labels)
}

fn find(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.exists() {
            return Ok(p);
        }
    }
    let alt = stem.replacen("-idx", ".idx", 1);
    for name in [alt.clone(), format!("{alt}.gz")] {
        let p = dir.join(name);
        if p.exists() {
            return Ok(p);
        }
    }
    Err(Error::Data(format!("{stem}[.gz] not found in {}", dir.display())))
}

/// Loads `train` or `t10k` from a directory of standard MNIST file names.
pub fn load_split(dir: impl AsRef<Path>, split: &str, limit: Option<usize>) -> Result<Dataset> {
    let dir = dir.as_ref();
    load_mnist(
        find(dir, &format!("{split}-images-idx3-ubyte"))?,
        find(dir, &format!("{split}-labels-idx1-ubyte"))?,
        limit,
    )
}
