//! Datasets: loading and saving, synthetic generators, and checkpoints.

pub mod checkpoint;
mod idx;
mod pgm;
pub mod synth;
mod text;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::item::{DataItem, Shape};
use crate::transforms::TransformFamily;

pub use idx::{read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
pub use pgm::{read_pgm, write_pgm};
pub use text::{read_labels, write_labels};

/// Environment variable naming the default dataset root.
pub const DATA_DIR_ENV: &str = "TDPMIX_DATA_DIR";

/// On-disk dataset formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// One curve per row, comma separated.
    CsvCurves,
    /// One `x,y` point per row.
    CsvPoints,
    /// A directory of binary (P5) PGM images, read in file-name order.
    PgmDir,
    /// An IDX image file (magic `0x00000803`).
    Idx,
}

impl Format {
    pub const NAMES: [&'static str; 4] = ["csv-curves", "csv-points", "pgm-dir", "idx"];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "csv-curves" => Ok(Format::CsvCurves),
            "csv-points" => Ok(Format::CsvPoints),
            "pgm-dir" => Ok(Format::PgmDir),
            "idx" => Ok(Format::Idx),
            other => Err(Error::invalid(format!(
                "unknown format '{other}', expected one of {}",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    /// Guesses a format from the path: directories are PGM sets, files
    /// whose name mentions `idx` or `ubyte` are IDX, names mentioning
    /// `points` are point sets, anything else is read as curves.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() {
            return Format::PgmDir;
        }
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if name.contains("idx") || name.contains("ubyte") {
            Format::Idx
        } else if name.contains("points") {
            Format::CsvPoints
        } else {
            Format::CsvCurves
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Points2d,
    Curves,
    Images,
}

/// A homogeneous collection of items with optional ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub shape: Shape,
    pub items: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(shape: Shape, items: Vec<Vec<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        for item in &items {
            if item.len() != shape.len() {
                return Err(Error::DimensionMismatch {
                    expected: shape.len(),
                    got: item.len(),
                });
            }
        }
        if let Some(l) = &labels {
            if l.len() != items.len() {
                return Err(Error::invalid(format!(
                    "{} labels for {} items",
                    l.len(),
                    items.len()
                )));
            }
        }
        Ok(Self {
            shape,
            items,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn kind(&self) -> DatasetKind {
        match self.shape {
            Shape::Point2 => DatasetKind::Points2d,
            Shape::Curve { .. } | Shape::Vector { .. } => DatasetKind::Curves,
            Shape::Image { .. } => DatasetKind::Images,
        }
    }

    pub fn item(&self, i: usize) -> DataItem {
        DataItem {
            values: self.items[i].clone(),
            shape: self.shape,
        }
    }

    /// Keeps the items at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            shape: self.shape,
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// The family `name` (or the default for this shape) with amplitude
    /// hints scaled to the median per-item value range.
    pub fn family(&self, name: Option<&str>) -> Result<TransformFamily> {
        let name = name.unwrap_or_else(|| default_family(self.shape));
        let mut ranges: Vec<f64> = self
            .items
            .iter()
            .map(|x| {
                let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .filter(|r| r.is_finite())
            .collect();
        ranges.sort_by(f64::total_cmp);
        let family = TransformFamily::from_name(name, self.shape)?;
        Ok(match ranges.get(ranges.len() / 2) {
            Some(&r) => family.with_value_range(r),
            None => family,
        })
    }

    /// Spread between the largest and smallest value over all items.
    pub fn value_range(&self) -> f64 {
        let (lo, hi) = self
            .items
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }
}

/// Transformation family used when none is named.
pub fn default_family(shape: Shape) -> &'static str {
    match shape {
        Shape::Point2 => "rotation2d",
        Shape::Curve { .. } => "curve14",
        Shape::Image { .. } => "affine7",
        Shape::Vector { .. } => "translation",
    }
}

/// Resolves a relative path against the data directory when it does not
/// exist as given.
pub fn resolve_path(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&root).join(path);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    path.to_path_buf()
}

/// Loads a dataset. For IDX input, `labels` may name an IDX label file; for
/// the other formats it may name a text file with one integer per line.
pub fn load(path: &Path, format: Format, labels: Option<&Path>) -> Result<Dataset> {
    let path = resolve_path(path);
    let mut data = match format {
        Format::CsvCurves => text::read_curves(&path)?,
        Format::CsvPoints => text::read_points(&path)?,
        Format::PgmDir => pgm::read_pgm_dir(&path)?,
        Format::Idx => read_idx_images(&path)?,
    };
    if let Some(lp) = labels {
        let lp = resolve_path(lp);
        let l = match format {
            Format::Idx => read_idx_labels(&lp)?,
            _ => read_labels(&lp)?,
        };
        if l.len() != data.len() {
            return Err(Error::format(
                lp.display().to_string(),
                format!("{} labels for {} items", l.len(), data.len()),
            ));
        }
        data.labels = Some(l);
    }
    Ok(data)
}

/// Writes a dataset. PGM output goes to a directory of numbered files.
pub fn save(data: &Dataset, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::CsvCurves => text::write_rows(path, &data.items),
        Format::CsvPoints => {
            if data.shape != Shape::Point2 {
                return Err(Error::invalid("csv-points needs 2D points"));
            }
            text::write_rows(path, &data.items)
        }
        Format::PgmDir => pgm::write_pgm_dir(path, data),
        Format::Idx => write_idx_images(path, data),
    }
}
