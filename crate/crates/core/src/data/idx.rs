//! IDX files: big-endian magic, big-endian `u32` dimensions, `u8` payload.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::item::Shape;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn header(bytes: &[u8], path: &Path, magic: u32, ndims: usize) -> Result<Vec<usize>> {
    let fail = |msg: String| Error::format(path.display().to_string(), msg);
    if bytes.is_empty() {
        return Err(fail("empty file".into()));
    }
    let need = 4 + 4 * ndims;
    if bytes.len() < need {
        return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
    }
    let word = |k: usize| u32::from_be_bytes(bytes[4 * k..4 * k + 4].try_into().expect("4 bytes"));
    let found = word(0);
    if found != magic {
        return Err(fail(format!(
            "bad magic 0x{found:08x}, expected 0x{magic:08x}"
        )));
    }
    let dims: Vec<usize> = (1..=ndims).map(|k| word(k) as usize).collect();
    let payload: usize = dims.iter().product();
    if bytes.len() - need != payload {
        return Err(fail(format!(
            "payload is {} bytes, header promises {payload}",
            bytes.len() - need
        )));
    }
    Ok(dims)
}

/// Reads an image file; pixels are scaled to `[0, 1]`.
pub fn read_idx_images(path: &Path) -> Result<Dataset> {
    let bytes = read_file(path)?;
    let dims = header(&bytes, path, IMAGES_MAGIC, 3)?;
    let (n, height, width) = (dims[0], dims[1], dims[2]);
    let size = width * height;
    let items = bytes[16..]
        .chunks_exact(size.max(1))
        .take(n)
        .map(|px| px.iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    Dataset::new(Shape::Image { width, height }, items, None)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_file(path)?;
    header(&bytes, path, LABELS_MAGIC, 1)?;
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Writes images, quantizing pixels to `u8` after clamping to `[0, 1]`.
pub fn write_idx_images(path: &Path, data: &Dataset) -> Result<()> {
    let Shape::Image { width, height } = data.shape else {
        return Err(Error::invalid("IDX output needs images"));
    };
    let mut out = Vec::with_capacity(16 + data.len() * width * height);
    out.extend(IMAGES_MAGIC.to_be_bytes());
    for d in [data.len(), height, width] {
        out.extend((d as u32).to_be_bytes());
    }
    for item in &data.items {
        out.extend(item.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(LABELS_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| Error::invalid(format!("label {l} exceeds 255")))?;
        out.push(b);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
