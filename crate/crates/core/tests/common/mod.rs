//! Independent oracles shared by the integration tests and the acceptance
//! runner. Each check returns the measured quantity; callers compare it with
//! the tolerance constants below.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::Distribution;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;
use tdpmix::data::checkpoint::Checkpoint;
use tdpmix::data::synth::{base_curve, synth_points2d, two_ring_groups};
use tdpmix::expfam::{
    BernoulliStats, DataPrior, Density, DiagGaussianStats, NigPrior, Sign, TransformPriorStats,
};
use tdpmix::jac::{crp_log_prior, estimate_log_marginal, resample_gamma, JacConfig, JacState, Proposal};
use tdpmix::model::{DataModel, Priors};
use tdpmix::transforms::{inverse_time_warp, time_warp, warp_bound, AffineImage};
use tdpmix::{Hyperparams, Shape, TransformFamily};

pub const QUADRATURE_CASES: usize = 20;
pub const QUADRATURE_TOL: f64 = 1e-6;
pub const CRP_TOL: f64 = 1e-12;
pub const GAMMA_MEAN_TOL: f64 = 0.02;
pub const IS_TOL_LARGE: f64 = 0.05;
pub const IS_TOL_SMALL: f64 = 0.20;
pub const ENUMERATION_TV: f64 = 0.05;

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `log ∫_0^1 θ^(α-1) (1-θ)^(β-1) dθ` by the trapezoid rule after
/// `θ = 1 / (1 + e^{-2s})`, which turns the endpoint singularities into
/// exponentially decaying tails.
fn log_beta_integral(alpha: f64, beta: f64) -> f64 {
    let h = 0.05;
    let reach = 60.0 / alpha.min(beta);
    let n = (2.0 * reach / h) as usize;
    let terms: Vec<f64> = (0..=n)
        .map(|k| {
            let s = -reach + k as f64 * h;
            2f64.ln() - alpha * softplus(-2.0 * s) - beta * softplus(2.0 * s)
        })
        .collect();
    log_sum_exp(&terms) + h.ln()
}

/// Largest |log predictive − quadrature| over random Beta–Bernoulli cases.
pub fn bernoulli_quadrature_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..QUADRATURE_CASES {
        let dim = rng.random_range(1..4);
        let a = rng.random_range(0.05..3.0);
        let b = rng.random_range(0.05..3.0);
        let count = rng.random_range(0..6);
        let mut stats = BernoulliStats::new(dim, a, b);
        let mut ones = vec![0.0; dim];
        for _ in 0..count {
            let x: Vec<f64> = (0..dim).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
            ones.iter_mut().zip(&x).for_each(|(o, v)| *o += v);
            stats.update(&x, Sign::Add).unwrap();
        }
        let x: Vec<f64> = (0..dim).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
        let oracle: f64 = (0..dim)
            .map(|d| {
                let (alpha, beta) = (a + ones[d], b + count as f64 - ones[d]);
                let norm = log_beta_integral(alpha, beta);
                if x[d] == 1.0 {
                    log_beta_integral(alpha + 1.0, beta) - norm
                } else {
                    log_beta_integral(alpha, beta + 1.0) - norm
                }
            })
            .sum();
        worst = worst.max((stats.log_predictive(&x).unwrap() - oracle).abs());
    }
    worst
}

/// `log ∫∫ Π_i N(x_i | μ, σ²) N(μ | μ0, σ²/κ0) IG(σ² | a0, b0) dμ dσ²` for
/// one dimension, on a grid in `log σ²` and `μ`.
fn log_nig_evidence(xs: &[f64], mu0: f64, kappa0: f64, a0: f64, b0: f64) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let n = xs.len() as f64;
    // Only positions the grid; any centre inside the bulk works.
    let centre = (kappa0 * mu0 + xs.iter().sum::<f64>()) / (kappa0 + n);
    let (ht, hm) = (0.02, 0.1);
    let mut outer = Vec::new();
    let mut t: f64 = -30.0;
    while t <= 40.0 {
        let var = t.exp();
        let log_ig = a0 * b0.ln() - ln_gamma(a0) - (a0 + 1.0) * t - b0 / var;
        let sd = (var / (kappa0 + n)).sqrt();
        let inner: Vec<f64> = (-120..=120)
            .map(|k| {
                let mu = centre + k as f64 * hm * sd;
                let prior = -0.5 * (ln2pi + (var / kappa0).ln())
                    - 0.5 * kappa0 * (mu - mu0).powi(2) / var;
                let lik: f64 = xs
                    .iter()
                    .map(|x| -0.5 * (ln2pi + t) - 0.5 * (x - mu).powi(2) / var)
                    .sum();
                prior + lik
            })
            .collect();
        // dσ² = σ² dt
        outer.push(log_sum_exp(&inner) + (hm * sd).ln() + log_ig + t);
        t += ht;
    }
    log_sum_exp(&outer) + ht.ln()
}

/// Largest |log predictive − quadrature| over random Normal–Inverse-Gamma
/// cases.
pub fn gaussian_quadrature_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..QUADRATURE_CASES {
        let dim = rng.random_range(1..3);
        let mu0 = rng.random_range(-1.0..1.0);
        let kappa0 = rng.random_range(0.01..2.0);
        let a0 = rng.random_range(0.5..3.0);
        let b0 = rng.random_range(0.1..2.0);
        let count = rng.random_range(0..5);
        let mut stats = DiagGaussianStats::new(NigPrior::isotropic(dim, mu0, kappa0, a0, b0));
        let data: Vec<Vec<f64>> = (0..count)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        for x in &data {
            stats.update(x, Sign::Add).unwrap();
        }
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let oracle: f64 = (0..dim)
            .map(|d| {
                let mut col: Vec<f64> = data.iter().map(|v| v[d]).collect();
                let before = log_nig_evidence(&col, mu0, kappa0, a0, b0);
                col.push(x[d]);
                log_nig_evidence(&col, mu0, kappa0, a0, b0) - before
            })
            .sum();
        worst = worst.max((stats.log_predictive(&x).unwrap() - oracle).abs());
    }
    worst
}

/// `log ∫ Π_i N(ρ_i | 0, σ²) IG(σ² | a, b) dσ²` for one dimension.
fn log_zero_mean_evidence(rs: &[f64], a: f64, b: f64) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let h = 0.01;
    let terms: Vec<f64> = (0..=8000)
        .map(|k| {
            let t: f64 = -40.0 + k as f64 * h;
            let var = t.exp();
            let log_ig = a * b.ln() - ln_gamma(a) - (a + 1.0) * t - b / var;
            let lik: f64 = rs.iter().map(|r| -0.5 * (ln2pi + t) - 0.5 * r * r / var).sum();
            log_ig + lik + t
        })
        .collect();
    log_sum_exp(&terms) + h.ln()
}

/// Largest |log predictive − quadrature| over random zero-mean
/// Inverse-Gamma transform priors.
pub fn transform_quadrature_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..QUADRATURE_CASES {
        let dim = rng.random_range(1..4);
        let a = rng.random_range(0.5..4.0);
        let b: Vec<f64> = (0..dim).map(|_| rng.random_range(0.05..2.0)).collect();
        let count = rng.random_range(0..6);
        let mut stats = TransformPriorStats::new(a, b.clone());
        let data: Vec<Vec<f64>> = (0..count)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        for r in &data {
            stats.update(r, Sign::Add).unwrap();
        }
        let r: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let oracle: f64 = (0..dim)
            .map(|d| {
                let mut col: Vec<f64> = data.iter().map(|v| v[d]).collect();
                let before = log_zero_mean_evidence(&col, a, b[d]);
                col.push(r[d]);
                log_zero_mean_evidence(&col, a, b[d]) - before
            })
            .sum();
        worst = worst.max((stats.log_predictive(&r).unwrap() - oracle).abs());
    }
    worst
}

/// Largest deviation of the summed CRP probabilities from 1.
pub fn crp_normalization_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(0..12);
        let counts: Vec<u64> = (0..k).map(|_| rng.random_range(1..500)).collect();
        let gamma = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(1e-3..50.0) };
        if k == 0 && gamma == 0.0 {
            continue;
        }
        let total: f64 = crp_log_prior(&counts, gamma).iter().map(|l| l.exp()).sum();
        worst = worst.max((total - 1.0).abs());
    }
    worst
}

/// Unnormalized log posterior of the concentration given `k` clusters over
/// `n` items under a Gamma(`shape`, `rate`) prior.
fn log_gamma_posterior(g: f64, k: usize, n: u64, shape: f64, rate: f64) -> f64 {
    (shape - 1.0 + k as f64) * g.ln() - rate * g + ln_gamma(g) - ln_gamma(g + n as f64)
}

/// Mean of `draws` chained auxiliary-variable updates.
pub fn escobar_west_mean(k: usize, n: u64, shape: f64, rate: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = 1.0;
    let mut sum = 0.0;
    for _ in 0..draws {
        g = resample_gamma(g, k, n, shape, rate, &mut rng);
        sum += g;
    }
    sum / draws as f64
}

/// Mean of a stepping-out slice sampler on `log γ` targeting the same
/// posterior.
pub fn slice_sampler_mean(k: usize, n: u64, shape: f64, rate: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = |u: f64| log_gamma_posterior(u.exp(), k, n, shape, rate) + u;
    let width = 1.0;
    let mut u: f64 = 0.0;
    let mut sum = 0.0;
    for _ in 0..draws {
        let level = target(u) + rng.random::<f64>().ln();
        let mut lo = u - width * rng.random::<f64>();
        let mut hi = lo + width;
        while target(lo) > level {
            lo -= width;
        }
        while target(hi) > level {
            hi += width;
        }
        loop {
            let cand = rng.random_range(lo..hi);
            if target(cand) > level {
                u = cand;
                break;
            }
            if cand < u {
                lo = cand;
            } else {
                hi = cand;
            }
        }
        sum += u.exp();
    }
    sum / draws as f64
}

/// Sorted samples of independent auxiliary-variable chains' final draws.
pub fn escobar_west_samples(k: usize, n: u64, draws: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = 1.0;
    let mut out: Vec<f64> = (0..draws)
        .map(|_| {
            g = resample_gamma(g, k, n, 1.0, 1.0, &mut rng);
            g
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

fn normal_density(mean: f64, var: f64) -> Density {
    Density::Normal {
        loc: vec![mean],
        inv_var: vec![1.0 / var],
        norm: -0.5 * (2.0 * std::f64::consts::PI * var).ln(),
    }
}

/// Root-mean-square relative error of the self-normalized importance
/// estimate of `∫ N(x − ρ | m, s²) N(ρ | 0, v) dρ` against trapezoid
/// quadrature, over `reps` independent estimates with `samples` proposals
/// each. One value per case; cases are drawn from the model itself and the
/// proposal is centred on the initial `ρ = 0`.
pub fn importance_rms_errors(samples: usize, reps: usize, seed: u64) -> Vec<f64> {
    let family = TransformFamily::from_name("translation", Shape::Vector { len: 1 }).unwrap();
    let hints = family.scale_hints();
    let mut case_rng = ChaCha8Rng::seed_from_u64(99);
    let cases: Vec<(f64, f64, f64, f64)> = (0..5)
        .map(|_| {
            let m: f64 = case_rng.random_range(-1.0..1.0);
            let s2: f64 = case_rng.random_range(0.1..0.5);
            let v: f64 = case_rng.random_range(0.3..1.2);
            let z: f64 = rand_distr::StandardNormal.sample(&mut case_rng);
            let w: f64 = rand_distr::StandardNormal.sample(&mut case_rng);
            (m + s2.sqrt() * z + v.sqrt() * w, m, s2, v)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cases
        .iter()
        .map(|&(x, m, s2, v)| {
            let data = normal_density(m, s2);
            let transform = normal_density(0.0, v);
            // Quadrature over ρ.
            let h = 1e-3;
            let exact: f64 = (-20_000..=20_000)
                .map(|k| {
                    let r = k as f64 * h;
                    let y = family.align(&[x], &[r]).unwrap();
                    (data.log_density(&y) + transform.log_density(&[r])).exp()
                })
                .sum::<f64>()
                * h;
            let proposal = Proposal::new(&[0.0], &hints, &[v]);
            let mse = (0..reps)
                .map(|_| {
                    let mut log_w = Vec::with_capacity(samples);
                    let mut log_lik = Vec::with_capacity(samples);
                    for _ in 0..samples {
                        let r = proposal.sample(&mut rng);
                        let y = family.align(&[x], &r).unwrap();
                        log_w.push(transform.log_density(&r) - proposal.log_density(&r));
                        log_lik.push(data.log_density(&y));
                    }
                    let estimate = estimate_log_marginal(&log_w, &log_lik).unwrap().exp();
                    ((estimate - exact) / exact).powi(2)
                })
                .sum::<f64>()
                / reps as f64;
            mse.sqrt()
        })
        .collect()
}

/// All set partitions of `n` items as restricted growth strings.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; n];
    fn rec(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max + 1 {
            cur[i] = l;
            rec(i + 1, max.max(l), cur, out);
        }
    }
    if n > 0 {
        rec(1, 0, &mut cur, &mut out);
    }
    out
}

fn canonical(labels: impl IntoIterator<Item = u64>) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .into_iter()
        .map(|l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Closed-form one-dimensional Normal–Inverse-Gamma evidence.
fn nig_log_evidence(xs: &[f64], mu0: f64, kappa0: f64, a0: f64, b0: f64) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let kn = kappa0 + n;
    let an = a0 + 0.5 * n;
    let bn = b0 + 0.5 * ss + kappa0 * n * (mean - mu0).powi(2) / (2.0 * kn);
    ln_gamma(an) - ln_gamma(a0) + a0 * b0.ln() - an * bn.ln() + 0.5 * (kappa0 / kn).ln()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Total-variation distance between the identity-family importance
/// sampler's partition frequencies and the exact DP-mixture posterior.
pub fn enumeration_tv(points: &[f64], sweeps: usize, seed: u64) -> f64 {
    let (mu0, kappa0, a0, b0, gamma): (f64, f64, f64, f64, f64) = (0.0, 0.5, 2.0, 1.0, 0.8);
    let exact: Vec<(Vec<usize>, f64)> = partitions(points.len())
        .into_iter()
        .map(|p| {
            let k = p.iter().max().unwrap() + 1;
            let mut log = k as f64 * gamma.ln();
            for c in 0..k {
                let xs: Vec<f64> = p
                    .iter()
                    .zip(points)
                    .filter(|(l, _)| **l == c)
                    .map(|(_, x)| *x)
                    .collect();
                log += ln_gamma(xs.len() as f64) + nig_log_evidence(&xs, mu0, kappa0, a0, b0);
            }
            (p, log)
        })
        .collect();
    let norm = log_sum_exp(&exact.iter().map(|(_, l)| *l).collect::<Vec<_>>());

    let priors = Priors {
        data: DataPrior::Gaussian(NigPrior::isotropic(1, mu0, kappa0, a0, b0)),
        transform_a: 2.0,
        transform_b: Vec::new(),
    };
    let items: Vec<Vec<f64>> = points.iter().map(|&x| vec![x]).collect();
    let mut state =
        JacState::new(items, TransformFamily::Identity, priors, gamma, (1.0, 1.0), seed).unwrap();
    let config = JacConfig {
        resample_gamma: false,
        samples: 1,
        ..JacConfig::default()
    };
    let burn = sweeps / 100;
    let mut freq: HashMap<Vec<usize>, usize> = HashMap::new();
    for s in 0..burn + sweeps {
        state.gibbs_iteration(&config).unwrap();
        if s >= burn {
            let key = canonical(state.assignments().iter().map(|z| z.unwrap()));
            *freq.entry(key).or_default() += 1;
        }
    }
    0.5 * exact
        .iter()
        .map(|(p, l)| {
            let f = freq.get(p).copied().unwrap_or(0) as f64 / sweeps as f64;
            (f - (l - norm).exp()).abs()
        })
        .sum::<f64>()
}

/// A small fitted point-set state used by the checkpoint and parallel
/// checks.
pub fn fitted_points(seed: u64, iterations: usize) -> (JacState, Shape) {
    let d = synth_points2d(&two_ring_groups(12), seed).unwrap();
    let family = TransformFamily::from_name("rotation2d", Shape::Point2).unwrap();
    let priors = Priors::resolve(
        &Hyperparams::default(),
        DataModel::Gaussian,
        &d.items,
        2,
        &family,
    )
    .unwrap();
    let mut state = JacState::new(d.items, family, priors, 1.0, (1.0, 1.0), seed).unwrap();
    state.run(iterations, &JacConfig::default()).unwrap();
    (state, Shape::Point2)
}

/// Checkpoint bytes survive decode/encode unchanged, and a restored state
/// carries the saved statistics exactly.
pub fn checkpoint_round_trip() -> Result<(), String> {
    let (state, shape) = fitted_points(3, 10);
    let ck = Checkpoint::from_state(&state, shape);
    let bytes = ck.to_bytes();
    let back = Checkpoint::from_bytes(&bytes).map_err(|e| e.to_string())?;
    if back != ck {
        return Err("decoded checkpoint differs".into());
    }
    if back.to_bytes() != bytes {
        return Err("re-encoded bytes differ".into());
    }
    let dir = std::env::temp_dir().join(format!("tdpmix-ck-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let path = dir.join("model.ck");
    ck.save(&path).map_err(|e| e.to_string())?;
    let loaded = Checkpoint::load(&path).map_err(|e| e.to_string());
    let _ = std::fs::remove_dir_all(&dir);
    if loaded? != ck {
        return Err("file round trip differs".into());
    }
    let restored = back
        .into_state(state.items().to_vec(), 0)
        .map_err(|e| e.to_string())?;
    let same = restored
        .clusters()
        .values()
        .map(|c| c.stats())
        .eq(state.clusters().values().map(|c| c.stats()));
    if !same {
        return Err("restored statistics differ".into());
    }
    Ok(())
}

/// Assignments, parameter bits, concentration bits and cluster counts.
type Fingerprint = (Vec<Option<u64>>, Vec<Vec<u64>>, u64, Vec<u64>);

fn fingerprint(state: &JacState) -> Fingerprint {
    (
        state.assignments().to_vec(),
        state
            .rho()
            .iter()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect(),
        state.gamma().to_bits(),
        state.clusters().values().map(|c| c.count()).collect(),
    )
}

/// Runs the same parallel iterations with each worker count and reports
/// whether every resulting state is bit-identical to the first.
pub fn worker_invariance(workers: &[usize], iterations: usize) -> Result<(), String> {
    let (start, _) = fitted_points(5, 2);
    let config = JacConfig::default();
    let mut reference = None;
    for &w in workers {
        let mut s = start.clone();
        for _ in 0..iterations {
            s.parallel_iteration(w, &config).map_err(|e| e.to_string())?;
        }
        let stats: Vec<_> = s.clusters().values().map(|c| c.stats().clone()).collect();
        let fp = (fingerprint(&s), stats);
        match &reference {
            None => reference = Some(fp),
            Some(r) if *r != fp => return Err(format!("{w} workers diverge from {}", workers[0])),
            Some(_) => {}
        }
    }
    Ok(())
}

/// Shuffled copy, for order-invariance checks.
pub fn shuffled<T: Clone>(v: &[T], seed: u64) -> Vec<T> {
    let mut out = v.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

/// Largest relative drift in sufficient statistics after adding random
/// items and removing them again in shuffled order, over all three
/// conjugate families.
pub fn add_remove_drift(rounds: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let rel = |a: f64, b: f64, scale: f64| (a - b).abs() / scale.max(1.0);
    for _ in 0..rounds {
        let batch = |rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64, n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..dim).map(|_| rng.random_range(lo..hi)).collect()).collect()
        };
        let (base, extra) = (batch(&mut rng, 3, -5.0, 5.0, 6), batch(&mut rng, 3, -5.0, 5.0, 6));
        let mut g = DiagGaussianStats::new(NigPrior::isotropic(3, 0.0, 0.5, 1.0, 1.0));
        base.iter().for_each(|x| g.update(x, Sign::Add).unwrap());
        let before = g.clone();
        extra.iter().for_each(|x| g.update(x, Sign::Add).unwrap());
        shuffled(&extra, rng.random()).iter().for_each(|x| g.update(x, Sign::Remove).unwrap());
        let scale: f64 = base.iter().chain(&extra).flatten().map(|v| v * v).sum();
        for (u, v) in g.sum().iter().zip(before.sum()).chain(g.sumsq().iter().zip(before.sumsq())) {
            worst = worst.max(rel(*u, *v, scale));
        }

        let (base, extra) = (batch(&mut rng, 4, 0.0, 1.0, 6), batch(&mut rng, 4, 0.0, 1.0, 6));
        let mut b = BernoulliStats::new(4, 0.5, 0.5);
        base.iter().for_each(|x| b.update(x, Sign::Add).unwrap());
        let before = b.clone();
        extra.iter().for_each(|x| b.update(x, Sign::Add).unwrap());
        shuffled(&extra, rng.random()).iter().for_each(|x| b.update(x, Sign::Remove).unwrap());
        for (u, v) in b.ones().iter().zip(before.ones()) {
            worst = worst.max(rel(*u, *v, 12.0));
        }

        let (base, extra) = (batch(&mut rng, 2, -1.0, 1.0, 6), batch(&mut rng, 2, -1.0, 1.0, 6));
        let mut t = TransformPriorStats::new(2.0, vec![0.3, 0.8]);
        base.iter().for_each(|r| t.update(r, Sign::Add).unwrap());
        let before = t.clone();
        extra.iter().for_each(|r| t.update(r, Sign::Add).unwrap());
        shuffled(&extra, rng.random()).iter().for_each(|r| t.update(r, Sign::Remove).unwrap());
        for (u, v) in t.sumsq().iter().zip(before.sumsq()) {
            worst = worst.max(rel(*u, *v, 12.0));
        }
    }
    worst
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Round-trip error per family next to its tolerance: `(name, error, tol)`.
pub fn round_trip_errors(cases: usize, seed: u64) -> Vec<(&'static str, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let rot = TransformFamily::from_name("rotation2d", Shape::Point2).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let rho = [rng.random_range(-3.0..3.0)];
        let back = rot.apply(&rot.align(&x, &rho).unwrap(), &rho).unwrap();
        worst = worst.max(max_abs(&back, &x));
    }
    out.push(("rotation2d", worst, 1e-12));

    let tr = TransformFamily::from_name("translation", Shape::Vector { len: 3 }).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let rho: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let back = tr.apply(&tr.align(&x, &rho).unwrap(), &rho).unwrap();
        worst = worst.max(max_abs(&back, &x));
    }
    out.push(("translation", worst, 1e-12));

    // Smooth blob; interior pixels are those whose preimage stays in frame.
    let (w, h) = (28usize, 28usize);
    let img: Vec<f64> = (0..w * h)
        .map(|p| {
            let (x, y) = ((p % w) as f64 - 13.5, (p / w) as f64 - 13.5);
            (-(x * x / 40.0 + y * y / 25.0)).exp()
        })
        .collect();
    let af = TransformFamily::Affine(AffineImage::new(w, h));
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let rho: Vec<f64> = af
            .random_params(1.0, &mut rng)
            .iter()
            .zip(af.scale_hints())
            .map(|(r, hint)| r.clamp(-hint, hint))
            .collect();
        let back = af.apply(&af.align(&img, &rho).unwrap(), &rho).unwrap();
        let sample = AffineImage::new(w, h).matrix(&rho).unwrap().inverse().unwrap();
        let inside = |v: f64, n: usize| (1.0..=(n - 2) as f64).contains(&v);
        for j in 1..h - 1 {
            for i in 1..w - 1 {
                let (sx, sy) = sample.transform(i as f64, j as f64);
                if inside(sx, w) && inside(sy, h) {
                    worst = worst.max((back[j * w + i] - img[j * w + i]).abs());
                }
            }
        }
    }
    out.push(("affine7", worst, 0.05));

    let curve = TransformFamily::from_name("curve14", Shape::Curve { len: 512 }).unwrap();
    let (mut warp_err, mut curve_err) = (0.0f64, 0.0f64);
    for k in 0..cases {
        let rho = curve.random_params(0.3, &mut rng);
        let c = &rho[..4];
        if warp_bound(c) < 1.0 {
            for j in 0..=1000 {
                let u = j as f64 / 1000.0;
                warp_err = warp_err.max((inverse_time_warp(c, time_warp(c, u)) - u).abs());
            }
        }
        let x = base_curve(k % 4, 512);
        let back = curve.apply(&curve.align(&x, &rho).unwrap(), &rho).unwrap();
        let range = x.iter().cloned().fold(f64::MIN, f64::max) - x.iter().cloned().fold(f64::MAX, f64::min);
        curve_err = curve_err.max(max_abs(&back, &x) / (0.02 * range.max(1.0)));
    }
    out.push(("time-warp inverse", warp_err, 1e-4));
    out.push(("curve14 (fraction of 0.02 range)", curve_err, 1.0));
    out
}
