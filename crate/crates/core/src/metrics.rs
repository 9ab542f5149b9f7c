//! Evaluation scores for alignments and clusterings.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Fraction of item pairs on which two labelings agree (co-clustered in
/// both or separated in both).
pub fn rand_index<A: Eq + Hash, B: Eq + Hash>(pred: &[A], truth: &[B]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::invalid("rand index needs at least two items"));
    }
    // Pair counts from the contingency table instead of all O(N²) pairs.
    let mut joint: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (a, b) in pred.iter().zip(truth) {
        *joint.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let pairs = |c: &u64| c * c.saturating_sub(1) / 2;
    let both: u64 = joint.values().map(pairs).sum();
    let same_pred: u64 = rows.values().map(pairs).sum();
    let same_truth: u64 = cols.values().map(pairs).sum();
    let total = (n as u64) * (n as u64 - 1) / 2;
    let agree = total + 2 * both - same_pred - same_truth;
    Ok(agree as f64 / total as f64)
}

/// Summary of Euclidean distances between all within-cluster pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentScore {
    pub mean: f64,
    /// Population standard deviation of the pair distances.
    pub std: f64,
    /// `std / √pairs`.
    pub stderr: f64,
    pub pairs: u64,
}

pub fn alignment_score<L: Eq + Hash>(aligned: &[Vec<f64>], z: &[L]) -> Result<AlignmentScore> {
    if aligned.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: aligned.len(),
            got: z.len(),
        });
    }
    // Groups in order of first appearance, so the sums are reproducible.
    let mut slot: HashMap<&L, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, k) in z.iter().enumerate() {
        let g = *slot.entry(k).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let (mut n, mut sum, mut sumsq) = (0u64, 0.0, 0.0);
    for members in &groups {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                if aligned[i].len() != aligned[j].len() {
                    return Err(Error::DimensionMismatch {
                        expected: aligned[i].len(),
                        got: aligned[j].len(),
                    });
                }
                let d = aligned[i]
                    .iter()
                    .zip(&aligned[j])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                n += 1;
                sum += d;
                sumsq += d * d;
            }
        }
    }
    if n == 0 {
        return Err(Error::invalid("no cluster has two members"));
    }
    let mean = sum / n as f64;
    let std = (sumsq / n as f64 - mean * mean).max(0.0).sqrt();
    Ok(AlignmentScore {
        mean,
        std,
        stderr: std / (n as f64).sqrt(),
        pairs: n,
    })
}

/// Binary entropy in bits, with `0 log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    h(p) + h(1.0 - p)
}

/// Mean over pixels of the binary entropy (bits) of each pixel's mean value.
pub fn mean_pixel_entropy(images: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = images.first() else {
        return Err(Error::invalid("no images"));
    };
    let dim = first.len();
    if dim == 0 {
        return Err(Error::invalid("images have no pixels"));
    }
    let mut mean = vec![0.0; dim];
    for img in images {
        if img.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: img.len(),
            });
        }
        for (m, &v) in mean.iter_mut().zip(img) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
            }
            *m += v;
        }
    }
    let n = images.len() as f64;
    Ok(mean.iter().map(|m| binary_entropy(m / n)).sum::<f64>() / dim as f64)
}

/// Sum over time steps of the population standard deviation across curves.
pub fn stddev_score(curves: &[Vec<f64>]) -> Result<f64> {
    if curves.len() < 2 {
        return Err(Error::invalid("stddev score needs at least two curves"));
    }
    let len = curves[0].len();
    if let Some(c) = curves.iter().find(|c| c.len() != len) {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: c.len(),
        });
    }
    let n = curves.len() as f64;
    Ok((0..len)
        .map(|t| {
            let mean = curves.iter().map(|c| c[t]).sum::<f64>() / n;
            let var = curves.iter().map(|c| (c[t] - mean).powi(2)).sum::<f64>() / n;
            var.sqrt()
        })
        .sum())
}
