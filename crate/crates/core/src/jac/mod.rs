//! Joint alignment and clustering under a Dirichlet-process mixture of
//! transformed components.
//!
//! Two item-level samplers are provided. The blocked sampler optimizes `ρ`
//! under every candidate cluster; the importance sampler draws one set of
//! proposals per item and reweights it for every cluster. Both leave
//! component parameters integrated out in cached statistics.

mod blocked;
mod concentration;
mod importance;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

pub use blocked::blocked_assign;
pub use concentration::{crp_log_prior, resample_gamma};
pub use importance::{estimate_log_marginal, importance_assign, Assignment, Proposal};

use crate::error::{Error, Result};
use crate::expfam::{ComponentStats, Density, Sign};
use crate::model::Priors;
use crate::optimize::OptimizerConfig;
use crate::transforms::TransformFamily;

/// Cached stats may drift from a from-scratch rebuild by at most this much.
pub const STATS_TOLERANCE: f64 = 1e-9;

/// Cluster identifier, stable for the life of the cluster.
pub type ClusterId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    /// Optimize `ρ` per candidate cluster, then draw the assignment.
    Blocked,
    /// Importance-sample `ρ` once per item and reweight per cluster.
    Importance,
}

/// Point estimate plugged in for existing clusters by the importance sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlugIn {
    /// Posterior modes `θ̂`, `φ̂`.
    Mode,
    /// Posterior predictive densities.
    Predictive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacConfig {
    pub sampler: Sampler,
    /// Proposals per item for the importance sampler.
    pub samples: usize,
    pub plug_in: PlugIn,
    pub optimizer: OptimizerConfig,
    /// Resample the concentration after every iteration (never when it is 0).
    pub resample_gamma: bool,
}

impl Default for JacConfig {
    fn default() -> Self {
        Self {
            sampler: Sampler::Importance,
            samples: 50,
            plug_in: PlugIn::Predictive,
            optimizer: OptimizerConfig::default(),
            resample_gamma: true,
        }
    }
}

/// One candidate destination for an item: a live cluster or a fresh one.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub log_prior: f64,
    pub data: Density,
    pub transform: Density,
}

/// A mixture component.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub(crate) stats: ComponentStats,
    /// Contributions not owned by a resampled item: replicated seeds or
    /// statistics loaded from a checkpoint.
    pub(crate) base: Option<ComponentStats>,
    pub(crate) members: usize,
    pub(crate) locked: bool,
}

impl Cluster {
    pub fn stats(&self) -> &ComponentStats {
        &self.stats
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn locked(&self) -> bool {
        self.locked
    }

    pub fn count(&self) -> u64 {
        self.stats.count()
    }

    /// Densities used for this cluster by the given sampler settings.
    pub fn densities(&self, sampler: Sampler, plug_in: PlugIn, family_dim: usize) -> (Density, Density) {
        component_densities(&self.stats, sampler, plug_in, family_dim)
    }
}

/// Densities of a non-empty component. Without transforms the data term is
/// always the exact predictive, which makes the importance sampler the
/// standard collapsed sampler.
pub(crate) fn component_densities(
    stats: &ComponentStats,
    sampler: Sampler,
    plug_in: PlugIn,
    family_dim: usize,
) -> (Density, Density) {
    match (sampler, plug_in) {
        (Sampler::Importance, PlugIn::Mode) => {
            let data = if family_dim == 0 {
                stats.data.predictive()
            } else {
                stats.data.mode_density()
            };
            (data, stats.transform.mode_density())
        }
        _ => (stats.data.predictive(), stats.transform.predictive()),
    }
}

/// Index of a draw from the categorical distribution with the given
/// unnormalized log weights. Falls back to the first maximum if no weight
/// is finite.
pub fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let max = log_weights
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return log_weights
            .iter()
            .position(|&v| v == max)
            .unwrap_or(0);
    }
    let weights: Vec<f64> = log_weights
        .iter()
        .map(|&v| if v.is_nan() { 0.0 } else { (v - max).exp() })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// `log Σ exp(v)`, `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-iteration trace entry.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationSummary {
    pub iteration: usize,
    pub clusters: usize,
    pub score: f64,
    pub gamma: f64,
}

/// Highest-scoring state seen by [`JacState::run`].
#[derive(Clone, Debug, PartialEq)]
pub struct BestState {
    pub iteration: usize,
    pub score: f64,
    pub assignments: Vec<Option<ClusterId>>,
    pub rho: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub iterations: Vec<IterationSummary>,
    pub best: Option<BestState>,
}

#[derive(Clone, Debug)]
pub struct JacState {
    pub(crate) family: TransformFamily,
    pub(crate) items: Vec<Vec<f64>>,
    pub(crate) z: Vec<Option<ClusterId>>,
    pub(crate) rho: Vec<Vec<f64>>,
    pub(crate) aligned: Vec<Vec<f64>>,
    /// Seed items: never resampled, their statistics live in the base.
    pub(crate) pinned: Vec<bool>,
    pub(crate) clusters: BTreeMap<ClusterId, Cluster>,
    pub(crate) next_id: ClusterId,
    pub(crate) gamma: f64,
    pub(crate) gamma_prior: (f64, f64),
    pub(crate) priors: Priors,
    pub(crate) iteration: usize,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) transform_calls: u64,
}

impl JacState {
    /// All items in a single cluster with `ρ = 0`.
    pub fn new(
        items: Vec<Vec<f64>>,
        family: TransformFamily,
        priors: Priors,
        gamma: f64,
        gamma_prior: (f64, f64),
        seed: u64,
    ) -> Result<Self> {
        Self::check_gamma(gamma, gamma_prior)?;
        let n = items.len();
        let zero = vec![0.0; family.dim()];
        let mut state = Self {
            family,
            z: vec![None; n],
            rho: vec![zero; n],
            aligned: items.clone(),
            items,
            pinned: vec![false; n],
            clusters: BTreeMap::new(),
            next_id: 0,
            gamma,
            gamma_prior,
            priors,
            iteration: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            transform_calls: 0,
        };
        if n > 0 {
            let id = state.create_cluster(None, false);
            for i in 0..n {
                state.attach(i, id)?;
            }
        }
        Ok(state)
    }

    /// Builds a state whose clusters carry previously saved statistics and
    /// whose items are all unassigned; the next iteration assigns them.
    pub fn from_saved_clusters(
        items: Vec<Vec<f64>>,
        family: TransformFamily,
        priors: Priors,
        clusters: Vec<(ComponentStats, bool)>,
        gamma: f64,
        gamma_prior: (f64, f64),
        seed: u64,
    ) -> Result<Self> {
        Self::check_gamma(gamma, gamma_prior)?;
        let n = items.len();
        let zero = vec![0.0; family.dim()];
        let mut state = Self {
            family,
            z: vec![None; n],
            rho: vec![zero; n],
            aligned: items.clone(),
            items,
            pinned: vec![false; n],
            clusters: BTreeMap::new(),
            next_id: 0,
            gamma,
            gamma_prior,
            priors,
            iteration: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            transform_calls: 0,
        };
        for (stats, locked) in clusters {
            if stats.data.dim() != state.priors.data_dim()
                || stats.transform.dim() != state.family.dim()
            {
                return Err(Error::DimensionMismatch {
                    expected: state.priors.data_dim(),
                    got: stats.data.dim(),
                });
            }
            state.create_cluster(Some(stats), locked);
        }
        state.check_gamma_rule()?;
        Ok(state)
    }

    fn check_gamma(gamma: f64, (shape, rate): (f64, f64)) -> Result<()> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::invalid(format!("concentration must be >= 0, got {gamma}")));
        }
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::invalid("concentration hyperprior must be positive"));
        }
        Ok(())
    }

    pub(crate) fn check_gamma_rule(&self) -> Result<()> {
        if self.gamma == 0.0 && !self.clusters.values().any(|c| c.locked || c.base.is_some()) {
            return Err(Error::invalid(
                "concentration 0 requires seeded or loaded clusters",
            ));
        }
        Ok(())
    }

    fn create_cluster(&mut self, base: Option<ComponentStats>, locked: bool) -> ClusterId {
        let id = self.next_id;
        self.next_id += 1;
        let stats = base.clone().unwrap_or_else(|| self.priors.empty_component());
        self.clusters.insert(
            id,
            Cluster {
                stats,
                base,
                members: 0,
                locked,
            },
        );
        id
    }

    /// Adds unassigned item `i` to cluster `id` with its current `(y, ρ)`.
    fn attach(&mut self, i: usize, id: ClusterId) -> Result<()> {
        debug_assert!(self.z[i].is_none());
        let cluster = self
            .clusters
            .get_mut(&id)
            .ok_or_else(|| Error::invalid(format!("no cluster {id}")))?;
        cluster.stats.update(&self.aligned[i], &self.rho[i], Sign::Add)?;
        cluster.members += 1;
        self.z[i] = Some(id);
        Ok(())
    }

    /// Removes item `i` from its cluster, deleting the cluster if it is left
    /// empty and unlocked. Returns the former cluster id.
    fn detach(&mut self, i: usize) -> Result<Option<ClusterId>> {
        let Some(id) = self.z[i] else { return Ok(None) };
        let cluster = self.clusters.get_mut(&id).expect("live cluster");
        cluster.stats.update(&self.aligned[i], &self.rho[i], Sign::Remove)?;
        cluster.members -= 1;
        if !cluster.locked && cluster.stats.count() == 0 {
            self.clusters.remove(&id);
        }
        self.z[i] = None;
        Ok(Some(id))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn family(&self) -> &TransformFamily {
        &self.family
    }

    pub fn priors(&self) -> &Priors {
        &self.priors
    }

    pub fn items(&self) -> &[Vec<f64>] {
        &self.items
    }

    pub fn assignments(&self) -> &[Option<ClusterId>] {
        &self.z
    }

    pub fn rho(&self) -> &[Vec<f64>] {
        &self.rho
    }

    pub fn aligned(&self) -> &[Vec<f64>] {
        &self.aligned
    }

    pub fn clusters(&self) -> &BTreeMap<ClusterId, Cluster> {
        &self.clusters
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_prior(&self) -> (f64, f64) {
        self.gamma_prior
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.pinned[i]
    }

    /// Total transform applications performed by the samplers.
    pub fn transform_calls(&self) -> u64 {
        self.transform_calls
    }

    /// Dense labels `0..K` in cluster-id order; unassigned items get `None`.
    pub fn labels(&self) -> Vec<Option<usize>> {
        let index: BTreeMap<ClusterId, usize> =
            self.clusters.keys().enumerate().map(|(k, id)| (*id, k)).collect();
        self.z.iter().map(|z| z.and_then(|id| index.get(&id).copied())).collect()
    }

    /// Seeds one locked cluster per distinct label from the given
    /// `(item, label)` pairs, each item counted `replication` times. Labeled
    /// items are pinned at `ρ = 0`; all other items become unassigned and
    /// are placed by the next iteration. Existing clusters are discarded.
    pub fn seed_clusters(&mut self, labeled: &[(usize, usize)], replication: usize) -> Result<BTreeMap<usize, ClusterId>> {
        if replication < 1 {
            return Err(Error::invalid("replication must be at least 1"));
        }
        let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut seen = vec![false; self.items.len()];
        for &(i, label) in labeled {
            if i >= self.items.len() {
                return Err(Error::invalid(format!("seed item {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("item {i} is seeded more than once")));
            }
            by_label.entry(label).or_default().push(i);
        }
        self.clusters.clear();
        let zero = vec![0.0; self.family.dim()];
        for i in 0..self.items.len() {
            self.z[i] = None;
            self.pinned[i] = false;
            self.rho[i].clone_from(&zero);
            self.aligned[i].clone_from(&self.items[i]);
        }
        let mut ids = BTreeMap::new();
        for (label, members) in by_label {
            let mut base = self.priors.empty_component();
            for &i in &members {
                for _ in 0..replication {
                    base.update(&self.items[i], &zero, Sign::Add)?;
                }
            }
            let id = self.create_cluster(Some(base), true);
            let cluster = self.clusters.get_mut(&id).expect("just created");
            cluster.members = members.len();
            for &i in &members {
                self.z[i] = Some(id);
                self.pinned[i] = true;
            }
            ids.insert(label, id);
        }
        Ok(ids)
    }

    /// Candidates for item `i` (already detached): live clusters in id
    /// order, then a fresh cluster when the concentration is positive.
    fn candidates(&self, sampler: Sampler, plug_in: PlugIn) -> (Vec<Option<ClusterId>>, Vec<Candidate>) {
        let counts: Vec<u64> = self.clusters.values().map(|c| c.count()).collect();
        let log_prior = crp_log_prior(&counts, self.gamma);
        let dim = self.family.dim();
        let mut ids = Vec::with_capacity(counts.len() + 1);
        let mut out = Vec::with_capacity(counts.len() + 1);
        for ((id, c), lp) in self.clusters.iter().zip(&log_prior) {
            let (data, transform) = c.densities(sampler, plug_in, dim);
            ids.push(Some(*id));
            out.push(Candidate {
                log_prior: *lp,
                data,
                transform,
            });
        }
        if self.gamma > 0.0 {
            let empty = self.priors.empty_component();
            ids.push(None);
            out.push(Candidate {
                log_prior: *log_prior.last().expect("new entry"),
                data: empty.data.predictive(),
                transform: empty.transform.predictive(),
            });
        }
        (ids, out)
    }

    /// Resamples the assignment and transformation of item `i`.
    pub fn step(&mut self, i: usize, config: &JacConfig) -> Result<()> {
        if i >= self.items.len() {
            return Err(Error::invalid(format!("item index {i} out of range")));
        }
        if self.pinned[i] {
            return Ok(());
        }
        let previous = self.detach(i)?;
        let (ids, candidates) = self.candidates(config.sampler, config.plug_in);
        if candidates.is_empty() {
            return Err(Error::invalid(
                "no cluster can accept the item: concentration is 0 and no cluster exists",
            ));
        }
        let outcome = match config.sampler {
            Sampler::Blocked => {
                let fresh_last = ids.last() == Some(&None);
                blocked_assign(
                    &self.family,
                    &self.items[i],
                    &self.rho[i],
                    &candidates,
                    fresh_last,
                    &config.optimizer,
                    &mut self.rng,
                )
            }
            Sampler::Importance => {
                if config.samples == 0 {
                    return Err(Error::invalid("importance sampler needs at least one sample"));
                }
                let var = match previous.and_then(|id| self.clusters.get(&id)) {
                    Some(c) => c.stats.transform.mode(),
                    None => self.priors.empty_transform_stats().mode(),
                };
                let proposal = Proposal::new(&self.rho[i], &self.family.scale_hints(), &var);
                importance_assign(
                    &self.family,
                    &self.items[i],
                    (&self.rho[i], &self.aligned[i]),
                    &candidates,
                    &proposal,
                    config.samples,
                    &mut self.rng,
                )
            }
        };
        self.transform_calls += outcome.transform_calls as u64;
        let id = match ids[outcome.choice] {
            Some(id) => id,
            None => self.create_cluster(None, false),
        };
        self.rho[i] = outcome.rho;
        self.aligned[i] = outcome.aligned;
        self.attach(i, id)
    }

    /// One sweep over a fresh permutation, followed by concentration
    /// resampling and a statistics check.
    pub fn gibbs_iteration(&mut self, config: &JacConfig) -> Result<IterationSummary> {
        self.check_gamma_rule()?;
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.shuffle(&mut self.rng);
        for i in order {
            self.step(i, config)?;
        }
        if config.resample_gamma {
            self.resample_gamma();
        }
        self.validate()?;
        self.iteration += 1;
        Ok(self.summary())
    }

    /// Escobar–West update of the concentration. A concentration of 0 is
    /// held fixed.
    pub fn resample_gamma(&mut self) {
        let k = self.clusters.len();
        let n: u64 = self.clusters.values().map(|c| c.count()).sum();
        if self.gamma == 0.0 || k == 0 || n == 0 {
            return;
        }
        let (shape, rate) = self.gamma_prior;
        self.gamma = resample_gamma(self.gamma, k, n, shape, rate, &mut self.rng);
    }

    pub fn summary(&self) -> IterationSummary {
        IterationSummary {
            iteration: self.iteration,
            clusters: self.clusters.len(),
            score: self.joint_log_score(),
            gamma: self.gamma,
        }
    }

    /// `log p(partition) + Σ_k log p(stats_k)`, the partition term being the
    /// Ewens formula over cluster counts. The partition term is dropped when
    /// the concentration is 0 (the cluster set is then fixed).
    pub fn joint_log_score(&self) -> f64 {
        let marginals: f64 = self.clusters.values().map(|c| c.stats.log_marginal()).sum();
        if self.gamma == 0.0 {
            return marginals;
        }
        let occupied: Vec<f64> = self
            .clusters
            .values()
            .map(|c| c.count() as f64)
            .filter(|&n| n > 0.0)
            .collect();
        let n: f64 = occupied.iter().sum();
        let partition = occupied.len() as f64 * self.gamma.ln()
            + occupied.iter().map(|&c| ln_gamma(c)).sum::<f64>()
            + ln_gamma(self.gamma)
            - ln_gamma(self.gamma + n);
        partition + marginals
    }

    /// Checks partition validity and that cached statistics match a
    /// from-scratch rebuild.
    pub fn validate(&self) -> Result<()> {
        let mut rebuilt: BTreeMap<ClusterId, (ComponentStats, usize)> = self
            .clusters
            .iter()
            .map(|(id, c)| {
                let base = c.base.clone().unwrap_or_else(|| self.priors.empty_component());
                (*id, (base, 0))
            })
            .collect();
        for (i, z) in self.z.iter().enumerate() {
            let Some(id) = z else { continue };
            let entry = rebuilt
                .get_mut(id)
                .ok_or_else(|| Error::invalid(format!("item {i} names missing cluster {id}")))?;
            entry.1 += 1;
            if !self.pinned[i] {
                entry.0.update(&self.aligned[i], &self.rho[i], Sign::Add)?;
            }
        }
        for (id, (stats, members)) in &rebuilt {
            let c = &self.clusters[id];
            if c.members != *members {
                return Err(Error::invalid(format!(
                    "cluster {id} records {} members, found {members}",
                    c.members
                )));
            }
            if !c.locked && c.count() == 0 {
                return Err(Error::invalid(format!("empty unlocked cluster {id}")));
            }
            let dev = c.stats.max_deviation(stats);
            if dev > STATS_TOLERANCE {
                return Err(Error::StatsDrift(dev));
            }
        }
        Ok(())
    }

    /// Runs `iterations` Gibbs iterations, recording the trace and the
    /// highest-scoring state.
    pub fn run(&mut self, iterations: usize, config: &JacConfig) -> Result<RunTrace> {
        self.run_with(iterations, |state| state.gibbs_iteration(config))
    }

    pub(crate) fn run_with(
        &mut self,
        iterations: usize,
        mut iterate: impl FnMut(&mut Self) -> Result<IterationSummary>,
    ) -> Result<RunTrace> {
        let mut trace = RunTrace {
            iterations: Vec::with_capacity(iterations),
            best: None,
        };
        for _ in 0..iterations {
            let summary = iterate(self)?;
            if trace.best.as_ref().is_none_or(|b| summary.score > b.score) {
                trace.best = Some(BestState {
                    iteration: summary.iteration,
                    score: summary.score,
                    assignments: self.z.clone(),
                    rho: self.rho.clone(),
                });
            }
            trace.iterations.push(summary);
        }
        Ok(trace)
    }
}
