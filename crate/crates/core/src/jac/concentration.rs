//! Chinese-restaurant predictive weights and auxiliary-variable resampling
//! of the concentration parameter.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

/// Log CRP probabilities for an item joining each existing cluster (sizes
/// `counts`, the item itself excluded) followed by one entry for a new
/// cluster. With `gamma = 0` the new-cluster entry is `-inf`.
pub fn crp_log_prior(counts: &[u64], gamma: f64) -> Vec<f64> {
    let total = counts.iter().sum::<u64>() as f64 + gamma;
    let log_total = total.ln();
    counts
        .iter()
        .map(|&n| (n as f64).ln() - log_total)
        .chain(std::iter::once(gamma.ln() - log_total))
        .collect()
}

/// One Escobar–West update of `gamma` given `clusters` occupied clusters
/// over `items` observations, under a `Gamma(shape, rate)` hyperprior.
pub fn resample_gamma<R: Rng + ?Sized>(
    gamma: f64,
    clusters: usize,
    items: u64,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> f64 {
    debug_assert!(gamma > 0.0 && clusters >= 1 && items >= 1);
    let n = items as f64;
    let k = clusters as f64;
    let eta = Beta::new(gamma + 1.0, n)
        .expect("valid beta parameters")
        .sample(rng)
        .max(f64::MIN_POSITIVE);
    let post_rate = rate - eta.ln();
    let a = shape + k - 1.0;
    let odds_first = a / (n * post_rate);
    let p_first = odds_first / (1.0 + odds_first);
    let post_shape = if rng.random::<f64>() < p_first {
        shape + k
    } else {
        shape + k - 1.0
    };
    // The second component has shape g_a + K - 1, which is 0 only when
    // g_a = 0 and K = 1; its weight is then 0 as well.
    let post_shape = post_shape.max(f64::MIN_POSITIVE);
    let draw = Gamma::new(post_shape, 1.0 / post_rate)
        .expect("valid gamma parameters")
        .sample(rng);
    draw.max(f64::MIN_POSITIVE)
}
