//! Comma-separated numeric text.

use std::fs::File;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::item::Shape;

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file))
}

fn read_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let fail = |msg: String| Error::format(path.display().to_string(), msg);
    let mut rows = Vec::new();
    for (line, record) in reader(path)?.records().enumerate() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| {
                let v: f64 = f
                    .parse()
                    .map_err(|_| fail(format!("row {}: '{f}' is not a number", line + 1)))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(fail(format!("row {}: non-finite value", line + 1)))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(fail("no data rows".into()));
    }
    Ok(rows)
}

/// Linear resampling of `x` to `len` points over the same span.
pub fn resample_linear(x: &[f64], len: usize) -> Vec<f64> {
    if x.len() == len {
        return x.to_vec();
    }
    if x.len() == 1 || len == 1 {
        return vec![x[0]; len];
    }
    let scale = (x.len() - 1) as f64 / (len - 1) as f64;
    (0..len)
        .map(|j| crate::transforms::lerp_at(x, j as f64 * scale))
        .collect()
}

pub(super) fn read_curves(path: &Path) -> Result<Dataset> {
    let rows = read_numeric_rows(path)?;
    let mut lens: Vec<usize> = rows.iter().map(Vec::len).collect();
    lens.sort_unstable();
    let len = lens[(lens.len() - 1) / 2];
    if len < 2 {
        return Err(Error::format(
            path.display().to_string(),
            "curves need at least two samples",
        ));
    }
    let items = rows.iter().map(|r| resample_linear(r, len)).collect();
    Dataset::new(Shape::Curve { len }, items, None)
}

pub(super) fn read_points(path: &Path) -> Result<Dataset> {
    let rows = read_numeric_rows(path)?;
    for (k, r) in rows.iter().enumerate() {
        if r.len() != 2 {
            return Err(Error::format(
                path.display().to_string(),
                format!("row {}: expected 2 columns, found {}", k + 1, r.len()),
            ));
        }
    }
    Dataset::new(Shape::Point2, rows, None)
}

/// One integer label per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let fail = |msg: String| Error::format(path.display().to_string(), msg);
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(k, l)| {
            l.parse()
                .map_err(|_| fail(format!("line {}: '{l}' is not a label", k + 1)))
        })
        .collect::<Result<Vec<usize>>>()?;
    if labels.is_empty() {
        return Err(fail("no labels".into()));
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Rows of comma-separated values in shortest round-trip notation.
pub(crate) fn write_rows(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(file);
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
