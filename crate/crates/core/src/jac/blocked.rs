//! Blocked assignment step: optimize `ρ` separately under every candidate
//! cluster, then draw the cluster from the optimized scores.

use rand::Rng;

use super::{sample_log_weights, Candidate};
use crate::optimize::{optimize_rho, OptimizerConfig};
use crate::transforms::TransformFamily;

use super::importance::Assignment;

/// `candidates` holds leave-one-out predictive densities. When `fresh_last`
/// is set, the last candidate is a new cluster: its search starts from the
/// identity with half the evaluation budget.
pub fn blocked_assign<R: Rng + ?Sized>(
    family: &TransformFamily,
    x: &[f64],
    current_rho: &[f64],
    candidates: &[Candidate],
    fresh_last: bool,
    optimizer: &OptimizerConfig,
    rng: &mut R,
) -> Assignment {
    assert!(!candidates.is_empty(), "no candidate clusters");
    let hints = family.scale_hints();
    let zero = vec![0.0; current_rho.len()];
    let fresh_config = optimizer.with_budget(optimizer.budget / 2);
    let mut calls = 0;
    let mut optima = Vec::with_capacity(candidates.len());
    for (k, c) in candidates.iter().enumerate() {
        let fresh = fresh_last && k + 1 == candidates.len();
        let (init, config) = if fresh {
            (zero.as_slice(), &fresh_config)
        } else {
            (current_rho, optimizer)
        };
        let objective = |rho: &[f64]| match family.align(x, rho) {
            Ok(y) => family.data_weight(rho) * c.data.log_density(&y) + c.transform.log_density(rho),
            Err(_) => f64::NEG_INFINITY,
        };
        let best = optimize_rho(objective, init, &hints, config, rng);
        calls += best.evaluations;
        optima.push(best);
    }
    let scores: Vec<f64> = candidates
        .iter()
        .zip(&optima)
        .map(|(c, o)| c.log_prior + o.score)
        .collect();
    let log_marginals = optima.iter().map(|o| o.score).collect();
    let choice = sample_log_weights(&scores, rng);
    let mut rho = optima.swap_remove(choice).rho;
    let aligned = match family.align(x, &rho) {
        Ok(y) => y,
        Err(_) => {
            // Only reachable if even the starting point was invalid.
            rho = zero.clone();
            x.to_vec()
        }
    };
    Assignment {
        choice,
        rho,
        aligned,
        log_marginals,
        transform_calls: calls + 1,
    }
}
