//! Dataset ingestion: IDX files, raw grayscale dumps, CSV matrices and
//! synthetic uniform patterns.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Result, SdmError};

/// A matrix of samples (one per row) with optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub data: Array2<f64>,
    pub labels: Option<Vec<u8>>,
    /// Image geometry, when the rows are images.
    pub height: usize,
    pub width: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// The first `count` rows (all rows if fewer).
    pub fn head(&self, count: usize) -> Dataset {
        let k = count.min(self.len());
        Dataset {
            data: self.data.slice(ndarray::s![..k, ..]).to_owned(),
            labels: self.labels.as_ref().map(|l| l[..k].to_vec()),
            height: self.height,
            width: self.width,
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            data: self.data.select(ndarray::Axis(0), rows),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect()),
            height: self.height,
            width: self.width,
        }
    }
}

const IDX_UBYTE: u8 = 0x08;

fn format_err(offset: u64, message: impl Into<String>) -> SdmError {
    SdmError::Format {
        offset,
        message: message.into(),
    }
}

/// Parses an IDX header, returning the dimension sizes and the offset of the
/// payload.
fn parse_idx_header(bytes: &[u8], expected_rank: u8) -> Result<(Vec<usize>, usize)> {
    if bytes.len() < 4 {
        return Err(format_err(
            bytes.len() as u64,
            format!("truncated header: expected 4 magic bytes, found {}", bytes.len()),
        ));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(format_err(0, format!("bad magic {:02x}{:02x}: leading bytes must be zero", bytes[0], bytes[1])));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(format_err(2, format!("unsupported element type 0x{:02x}, only unsigned bytes", bytes[2])));
    }
    if bytes[3] != expected_rank {
        return Err(format_err(3, format!("expected rank {expected_rank}, found {}", bytes[3])));
    }
    let rank = expected_rank as usize;
    let header_len = 4 + 4 * rank;
    if bytes.len() < header_len {
        return Err(format_err(
            bytes.len() as u64,
            format!("truncated header: expected {header_len} bytes, found {}", bytes.len()),
        ));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|p| p.checked_add(header_len))
        .ok_or_else(|| format_err(4, "dimension overflow: payload size does not fit in memory"))?;
    if bytes.len() < payload {
        return Err(format_err(
            bytes.len() as u64,
            format!("truncated data: expected {payload} bytes, found {}", bytes.len()),
        ));
    }
    Ok((dims, header_len))
}

/// Loads a rank-3 unsigned-byte IDX image file (magic `0x00000803`), scaling
/// pixels to `[0, 1]` and flattening each image row-major.
pub fn load_idx(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_idx_images(&fs::read(path)?)
}

/// [`load_idx`] on an in-memory buffer.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Dataset> {
    let (dims, offset) = parse_idx_header(bytes, 3)?;
    let (count, height, width) = (dims[0], dims[1], dims[2]);
    let n = height * width;
    let data = Array2::from_shape_fn((count, n), |(i, j)| f64::from(bytes[offset + i * n + j]) / 255.0);
    Ok(Dataset {
        data,
        labels: None,
        height,
        width,
    })
}

/// Loads a rank-1 unsigned-byte IDX label file (magic `0x00000801`).
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&fs::read(path)?)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let (dims, offset) = parse_idx_header(bytes, 1)?;
    Ok(bytes[offset..offset + dims[0]].to_vec())
}

/// Serializes images (values in `[0, 1]`) as an IDX file.
pub fn encode_idx_images(data: &Array2<f64>, height: usize, width: usize) -> Result<Vec<u8>> {
    if data.ncols() != height * width {
        return Err(SdmError::Dimension {
            expected: height * width,
            actual: data.ncols(),
        });
    }
    let mut out = Vec::with_capacity(16 + data.len());
    out.extend_from_slice(&[0, 0, IDX_UBYTE, 3]);
    for d in [data.nrows(), height, width] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend(data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    Ok(out)
}

/// Loads raw row-major `uint8` images of the given geometry.  Multi-channel
/// input is interleaved per pixel and converted to grayscale by the mean over
/// channels.
pub fn load_raw_grayscale(path: impl AsRef<Path>, height: usize, width: usize, channels: usize) -> Result<Dataset> {
    parse_raw_grayscale(&fs::read(path)?, height, width, channels)
}

pub fn parse_raw_grayscale(bytes: &[u8], height: usize, width: usize, channels: usize) -> Result<Dataset> {
    let per_image = height
        .checked_mul(width)
        .and_then(|p| p.checked_mul(channels))
        .filter(|&p| p > 0)
        .ok_or_else(|| format_err(0, "invalid image geometry"))?;
    if bytes.len() % per_image != 0 {
        let whole = bytes.len() / per_image * per_image;
        return Err(format_err(
            whole as u64,
            format!(
                "truncated image: expected {} bytes, found {}",
                whole + per_image,
                bytes.len()
            ),
        ));
    }
    let count = bytes.len() / per_image;
    let n = height * width;
    let data = Array2::from_shape_fn((count, n), |(i, j)| {
        let base = i * per_image + j * channels;
        bytes[base..base + channels].iter().map(|&b| f64::from(b)).sum::<f64>() / (255.0 * channels as f64)
    });
    Ok(Dataset {
        data,
        labels: None,
        height,
        width,
    })
}

/// Loads a CSV matrix of floats (no header; comma-separated).
pub fn load_csv_matrix(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_csv_matrix(&fs::read_to_string(path)?)
}

pub fn parse_csv_matrix(text: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let row = trimmed
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| format_err(offset, format!("row {}: {e}", rows.len())))?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(format_err(
                        offset,
                        format!("row {} has {} columns, expected {}", rows.len(), row.len(), first.len()),
                    ));
                }
            }
            rows.push(row);
        }
        offset += line.len() as u64 + 1;
    }
    let cols = rows.first().map_or(0, Vec::len);
    let data = Array2::from_shape_vec((rows.len(), cols), rows.concat()).expect("rows checked rectangular");
    Ok(Dataset {
        data,
        labels: None,
        height: 1,
        width: cols,
    })
}

/// `m` samples with entries drawn from `Uniform(−1, 1)`.
pub fn random_uniform<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Dataset {
    let dist = Uniform::new(-1.0, 1.0).expect("valid range");
    let data = Array2::from_shape_fn((m, n), |_| dist.sample(rng));
    Dataset {
        data,
        labels: None,
        height: 1,
        width: n,
    }
}
