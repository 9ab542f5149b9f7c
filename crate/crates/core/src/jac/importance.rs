//! Importance-sampling assignment step.
//!
//! One set of proposals `ρ^l ~ q` is drawn per item and aligned once; every
//! candidate cluster then reweights the same aligned samples, so the number
//! of transform calls per item is `L` regardless of the cluster count.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{log_sum_exp, sample_log_weights, Candidate};
use crate::transforms::TransformFamily;

/// Equal-weight mixture proposal over transformation parameters:
/// a local perturbation of the current value, a broad zero-mean Gaussian at
/// the scale hints, and the assigned cluster's transform Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    current: Vec<f64>,
    local_std: Vec<f64>,
    broad_std: Vec<f64>,
    cluster_std: Vec<f64>,
}

impl Proposal {
    pub fn new(current: &[f64], hints: &[f64], cluster_var: &[f64]) -> Self {
        Self {
            current: current.to_vec(),
            local_std: hints.iter().map(|h| 0.25 * h).collect(),
            broad_std: hints.to_vec(),
            cluster_std: cluster_var.iter().map(|v| v.sqrt()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.current.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let component = rng.random_range(0..3);
        (0..self.dim())
            .map(|d| {
                let z: f64 = StandardNormal.sample(rng);
                match component {
                    0 => self.current[d] + self.local_std[d] * z,
                    1 => self.broad_std[d] * z,
                    _ => self.cluster_std[d] * z,
                }
            })
            .collect()
    }

    pub fn log_density(&self, rho: &[f64]) -> f64 {
        let zeros = vec![0.0; self.dim()];
        let terms = [
            diag_normal_log_density(rho, &self.current, &self.local_std),
            diag_normal_log_density(rho, &zeros, &self.broad_std),
            diag_normal_log_density(rho, &zeros, &self.cluster_std),
        ];
        log_sum_exp(&terms) - 3f64.ln()
    }
}

fn diag_normal_log_density(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((v, m), s)| {
            let u = (v - m) / s;
            -0.5 * u * u - s.ln() - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// Self-normalized importance estimate
/// `log(Σ_l w_l p_l / Σ_l w_l)` from log weights and log likelihoods.
/// Returns `None` when every weight is zero.
pub fn estimate_log_marginal(log_weights: &[f64], log_liks: &[f64]) -> Option<f64> {
    let denom = log_sum_exp(log_weights);
    if denom == f64::NEG_INFINITY || denom.is_nan() {
        return None;
    }
    let joint: Vec<f64> = log_weights
        .iter()
        .zip(log_liks)
        .map(|(w, l)| if *w == f64::NEG_INFINITY { *w } else { w + l })
        .collect();
    Some(log_sum_exp(&joint) - denom)
}

/// Result of one assignment step for one item.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Index into the candidate list.
    pub choice: usize,
    pub rho: Vec<f64>,
    pub aligned: Vec<f64>,
    /// Per-candidate log marginal estimates actually used for the draw.
    pub log_marginals: Vec<f64>,
    pub transform_calls: usize,
}

/// Draws `samples` proposals, estimates each candidate's marginal, samples
/// the assignment and picks the best proposal for the chosen cluster.
///
/// `current` is the item's present `(ρ, y)` pair. It competes in the final
/// selection of `ρ` but not in the marginal estimates, and costs no
/// transform call because `y` is already known.
pub fn importance_assign<R: Rng + ?Sized>(
    family: &TransformFamily,
    x: &[f64],
    current: (&[f64], &[f64]),
    candidates: &[Candidate],
    proposal: &Proposal,
    samples: usize,
    rng: &mut R,
) -> Assignment {
    assert!(!candidates.is_empty(), "no candidate clusters");
    let draws: Vec<Vec<f64>> = (0..samples).map(|_| proposal.sample(rng)).collect();
    let aligned: Vec<Option<Vec<f64>>> = draws.iter().map(|r| family.align(x, r).ok()).collect();
    let log_q: Vec<f64> = draws.iter().map(|r| proposal.log_density(r)).collect();

    let per_candidate: Vec<(Vec<f64>, Vec<f64>)> = candidates
        .iter()
        .map(|c| {
            let mut log_w = Vec::with_capacity(samples);
            let mut log_lik = Vec::with_capacity(samples);
            for ((r, y), q) in draws.iter().zip(&aligned).zip(&log_q) {
                match y {
                    Some(y) => {
                        log_w.push(c.transform.log_density(r) - q);
                        log_lik.push(family.data_weight(r) * c.data.log_density(y));
                    }
                    None => {
                        log_w.push(f64::NEG_INFINITY);
                        log_lik.push(f64::NEG_INFINITY);
                    }
                }
            }
            (log_w, log_lik)
        })
        .collect();

    let estimates: Vec<Option<f64>> = per_candidate
        .iter()
        .map(|(w, l)| estimate_log_marginal(w, l).filter(|v| !v.is_nan()))
        .collect();
    // Collapsed weights: fall back to the last (fresh) candidate's estimate,
    // then to the density at the current parameters.
    let fallback_fresh = *estimates.last().expect("non-empty");
    let log_marginals: Vec<f64> = estimates
        .iter()
        .zip(candidates)
        .map(|(e, c)| {
            e.or(fallback_fresh).unwrap_or_else(|| {
                c.transform.log_density(current.0)
                    + family.data_weight(current.0) * c.data.log_density(current.1)
            })
        })
        .collect();

    let scores: Vec<f64> = candidates
        .iter()
        .zip(&log_marginals)
        .map(|(c, m)| c.log_prior + m)
        .collect();
    let choice = sample_log_weights(&scores, rng);

    let chosen = &candidates[choice];
    let mut best = chosen.transform.log_density(current.0)
        + family.data_weight(current.0) * chosen.data.log_density(current.1);
    let mut best_index = None;
    for (l, y) in aligned.iter().enumerate() {
        let Some(y) = y else { continue };
        let s = chosen.transform.log_density(&draws[l])
            + family.data_weight(&draws[l]) * chosen.data.log_density(y);
        if s > best || (best.is_nan() && !s.is_nan()) {
            best = s;
            best_index = Some(l);
        }
    }
    let (rho, aligned_y) = match best_index {
        Some(l) => (
            draws[l].clone(),
            aligned[l].clone().expect("valid sample"),
        ),
        None => (current.0.to_vec(), current.1.to_vec()),
    };
    Assignment {
        choice,
        rho,
        aligned: aligned_y,
        log_marginals,
        transform_calls: samples,
    }
}
