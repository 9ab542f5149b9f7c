//! Binary (P5) PGM images.

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::item::Shape;

/// Parses a P5 image into `(width, height, pixels in [0, 1])`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|msg| Error::format(path.display().to_string(), msg))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f64>), String> {
    if bytes.is_empty() {
        return Err("empty file".into());
    }
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(format!("unsupported magic '{magic}', expected P5"));
    }
    let mut number = |what: &str| -> std::result::Result<usize, String> {
        let t = token()?;
        t.parse().map_err(|_| format!("bad {what} '{t}'"))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let depth = if maxval > 255 { 2 } else { 1 };
    let need = width * height * depth;
    if bytes.len() < start + need {
        return Err(format!(
            "raster has {} bytes, expected {need}",
            bytes.len().saturating_sub(start)
        ));
    }
    let raster = &bytes[start..start + need];
    let scale = maxval as f64;
    let pixels = if depth == 1 {
        raster.iter().map(|&b| b as f64 / scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    Ok((width, height, pixels))
}

/// Writes an 8-bit P5 image, clamping values to `[0, 1]`.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: width * height,
            got: pixels.len(),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub(super) fn read_pgm_dir(dir: &Path) -> Result<Dataset> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::format(dir.display().to_string(), "no .pgm files"));
    }
    let mut shape = None;
    let mut items = Vec::with_capacity(files.len());
    for f in &files {
        let (w, h, px) = read_pgm(f)?;
        let s = Shape::Image { width: w, height: h };
        if *shape.get_or_insert(s) != s {
            return Err(Error::format(
                f.display().to_string(),
                "image size differs from the first image",
            ));
        }
        items.push(px);
    }
    Dataset::new(shape.expect("non-empty"), items, None)
}

pub(super) fn write_pgm_dir(dir: &Path, data: &Dataset) -> Result<()> {
    let Shape::Image { width, height } = data.shape else {
        return Err(Error::invalid("PGM output needs images"));
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let digits = data.len().max(1).to_string().len();
    for (i, item) in data.items.iter().enumerate() {
        write_pgm(&dir.join(format!("{i:0digits$}.pgm")), width, height, item)?;
    }
    Ok(())
}
