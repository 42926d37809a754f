//! IDX image/label containers (the MNIST distribution format).
//!
//! Both files are big-endian: a 32-bit magic (`0x00000803` for images,
//! `0x00000801` for labels), one 32-bit count per dimension, then the raw
//! unsigned bytes. Files must already be decompressed.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, WuxingError};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels of every image, scaled to `[0, 1]`.
    pub pixels: Vec<f32>,
}

impl ImageSet {
    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.pixels_per_image();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn features(&self, i: usize) -> Vec<f64> {
        self.image(i).iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub count: usize,
    pub labels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| WuxingError::Format {
            offset,
            reason: "header truncated".into(),
        })
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != want {
        return Err(WuxingError::Format {
            offset: 0,
            reason: format!("magic {magic:#010x}, expected {want:#010x}"),
        });
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let have = bytes.len() - header;
    if have < len {
        return Err(WuxingError::Format {
            offset: bytes.len(),
            reason: format!("payload truncated: {have} of {len} bytes"),
        });
    }
    if have > len {
        return Err(WuxingError::Format {
            offset: header + len,
            reason: format!("{} trailing bytes after payload", have - len),
        });
    }
    Ok(&bytes[header..])
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageSet> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| WuxingError::Format {
            offset: 4,
            reason: "dimensions overflow".into(),
        })?;
    let data = payload(bytes, 16, len)?;
    Ok(ImageSet {
        count,
        rows,
        cols,
        pixels: data.iter().map(|&b| b as f32 / 255.0).collect(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<LabelSet> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let data = payload(bytes, 8, count)?;
    if let Some(index) = data.iter().position(|&b| b > 9) {
        return Err(WuxingError::LabelDomain {
            index,
            label: data[index],
        });
    }
    Ok(LabelSet {
        count,
        labels: data.to_vec(),
    })
}

/// Inverse of [`parse_idx_images`]; pixels are written as `round(255 v)`.
pub fn serialize_idx_images(set: &ImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.pixels.len());
    for v in [IMAGE_MAGIC, set.count as u32, set.rows as u32, set.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(set.pixels.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn serialize_idx_labels(set: &LabelSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + set.labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(set.count as u32).to_be_bytes());
    out.extend_from_slice(&set.labels);
    out
}

pub fn load_images(path: impl AsRef<Path>) -> Result<ImageSet> {
    parse_idx_images(&fs::read(path)?)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    parse_idx_labels(&fs::read(path)?)
}

/// Non-overlapping `factor x factor` mean pooling.
pub fn downsample(img: &ImageSet, factor: usize) -> Result<ImageSet> {
    if factor == 0 || img.rows % factor != 0 || img.cols % factor != 0 {
        return Err(WuxingError::Dimension(format!(
            "{}x{} images cannot be pooled by {factor}",
            img.rows, img.cols
        )));
    }
    let (rows, cols) = (img.rows / factor, img.cols / factor);
    let area = (factor * factor) as f32;
    let mut pixels = Vec::with_capacity(img.count * rows * cols);
    for i in 0..img.count {
        let src = img.image(i);
        for r in 0..rows {
            for c in 0..cols {
                let mut s = 0.0f32;
                for dr in 0..factor {
                    let row = (r * factor + dr) * img.cols;
                    for dc in 0..factor {
                        s += src[row + c * factor + dc];
                    }
                }
                pixels.push(s / area);
            }
        }
    }
    Ok(ImageSet {
        count: img.count,
        rows,
        cols,
        pixels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Borrowing `(features, label)` view suitable for the training loop.
pub fn stream(samples: &[Sample]) -> impl Iterator<Item = (&[f64], usize)> + Clone {
    samples.iter().map(|s| (s.features.as_slice(), s.label))
}

/// Seeded shuffle of all indices (ChaCha8), then the first `n_train` go to
/// the training split and the next `n_test` to the test split.
pub fn make_split(
    images: &ImageSet,
    labels: &LabelSet,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if images.count != labels.count {
        return Err(WuxingError::Dimension(format!(
            "{} images but {} labels",
            images.count, labels.count
        )));
    }
    if n_train + n_test > images.count {
        return Err(WuxingError::Dimension(format!(
            "requested {n_train} + {n_test} samples from a set of {}",
            images.count
        )));
    }
    let mut idx: Vec<usize> = (0..images.count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |ids: &[usize]| {
        ids.iter()
            .map(|&i| Sample {
                features: images.features(i),
                label: labels.labels[i] as usize,
            })
            .collect::<Vec<_>>()
    };
    Ok((take(&idx[..n_train]), take(&idx[n_train..n_train + n_test])))
}
