//! Snapshot map/reduce iteration.
//!
//! Every item is updated against a frozen copy of the cluster parameters
//! (map), after which every cluster's statistics are rebuilt from its members
//! (reduce). Each item draws from its own random stream, keyed by the
//! iteration seed and the item index, so the trajectory does not depend on
//! how items are spread over workers.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expfam::{ComponentStats, Density, Sign};
use crate::jac::{
    component_densities, crp_log_prior, importance_assign, Candidate, Cluster, ClusterId,
    IterationSummary, JacConfig, JacState, Proposal, RunTrace, Sampler,
};
use crate::transforms::TransformFamily;

/// Frozen per-cluster quantities read by the map phase.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenCluster {
    pub id: ClusterId,
    /// Statistics count, including base contributions.
    pub count: u64,
    pub data: Density,
    pub transform: Density,
    /// Mode of the cluster's transform variances (proposal component).
    pub transform_var: Vec<f64>,
}

/// Immutable view of a state at the start of an iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    /// Root of the per-item random streams.
    pub seed: u64,
    pub gamma: f64,
    pub clusters: Vec<FrozenCluster>,
    /// Prior predictives scored for a fresh cluster.
    pub fresh: (Density, Density),
    pub prior_var: Vec<f64>,
    pub hints: Vec<f64>,
}

impl Snapshot {
    pub fn new(state: &JacState, config: &JacConfig, seed: u64) -> Self {
        let dim = state.family().dim();
        let clusters = state
            .clusters()
            .iter()
            .map(|(id, c)| {
                let (data, transform) =
                    component_densities(c.stats(), Sampler::Importance, config.plug_in, dim);
                FrozenCluster {
                    id: *id,
                    count: c.count(),
                    data,
                    transform,
                    transform_var: c.stats().transform.mode(),
                }
            })
            .collect();
        let empty = state.priors().empty_component();
        Self {
            iteration: state.iteration(),
            seed,
            gamma: state.gamma(),
            clusters,
            fresh: (empty.data.predictive(), empty.transform.predictive()),
            prior_var: empty.transform.mode(),
            hints: state.family().scale_hints(),
        }
    }

    /// The random stream of item `i` for this iteration.
    pub fn item_rng(&self, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        rng
    }

    fn position(&self, id: ClusterId) -> Option<usize> {
        self.clusters.binary_search_by_key(&id, |c| c.id).ok()
    }
}

/// Result of updating one item. `cluster == None` marks a fresh-cluster draw.
#[derive(Clone, Debug, PartialEq)]
pub struct MapOutput {
    pub cluster: Option<ClusterId>,
    pub rho: Vec<f64>,
    pub aligned: Vec<f64>,
    pub transform_calls: usize,
}

/// Importance-sampler update of one item against the snapshot. `current`
/// is the item's cluster (if any), `(ρ, y)` its present transform and
/// aligned value. The item's own membership is removed from the CRP counts;
/// the frozen densities are used as they are.
pub fn map_item(
    snapshot: &Snapshot,
    family: &TransformFamily,
    i: usize,
    x: &[f64],
    current: Option<ClusterId>,
    (rho, y): (&[f64], &[f64]),
    samples: usize,
) -> Result<MapOutput> {
    if samples == 0 {
        return Err(Error::invalid("importance sampler needs at least one sample"));
    }
    let own = current.and_then(|id| snapshot.position(id));
    let counts: Vec<u64> = snapshot
        .clusters
        .iter()
        .enumerate()
        .map(|(k, c)| if Some(k) == own { c.count.saturating_sub(1) } else { c.count })
        .collect();
    let log_prior = crp_log_prior(&counts, snapshot.gamma);
    let mut ids: Vec<Option<ClusterId>> = Vec::with_capacity(counts.len() + 1);
    let mut candidates = Vec::with_capacity(counts.len() + 1);
    for (c, lp) in snapshot.clusters.iter().zip(&log_prior) {
        ids.push(Some(c.id));
        candidates.push(Candidate {
            log_prior: *lp,
            data: c.data.clone(),
            transform: c.transform.clone(),
        });
    }
    if snapshot.gamma > 0.0 {
        ids.push(None);
        candidates.push(Candidate {
            log_prior: *log_prior.last().expect("new entry"),
            data: snapshot.fresh.0.clone(),
            transform: snapshot.fresh.1.clone(),
        });
    }
    if candidates.is_empty() {
        return Err(Error::invalid(
            "no cluster can accept the item: concentration is 0 and no cluster exists",
        ));
    }
    let var = match own {
        Some(k) => &snapshot.clusters[k].transform_var,
        None => &snapshot.prior_var,
    };
    let proposal = Proposal::new(rho, &snapshot.hints, var);
    let mut rng = snapshot.item_rng(i);
    let out = importance_assign(family, x, (rho, y), &candidates, &proposal, samples, &mut rng);
    Ok(MapOutput {
        cluster: ids[out.choice],
        rho: out.rho,
        aligned: out.aligned,
        transform_calls: out.transform_calls,
    })
}

/// Rebuilds every cluster from scratch over its members after a map phase.
/// All fresh draws join a single new cluster with id `fresh_id`; unlocked
/// clusters left without statistics are dropped. Members are accumulated in
/// item order, so the result does not depend on how the map was scheduled.
pub fn reduce_clusters(
    previous: &BTreeMap<ClusterId, Cluster>,
    empty: &ComponentStats,
    z: &[Option<ClusterId>],
    aligned: &[Vec<f64>],
    rho: &[Vec<f64>],
    pinned: &[bool],
    fresh_id: ClusterId,
) -> Result<BTreeMap<ClusterId, Cluster>> {
    let mut members: BTreeMap<ClusterId, Vec<usize>> = BTreeMap::new();
    for (i, id) in z.iter().enumerate() {
        if let Some(id) = id {
            members.entry(*id).or_default().push(i);
        }
    }
    let mut ids: Vec<ClusterId> = previous.keys().copied().collect();
    if members.contains_key(&fresh_id) && !previous.contains_key(&fresh_id) {
        ids.push(fresh_id);
    }
    if let Some(id) = members.keys().find(|id| !ids.contains(id)) {
        return Err(Error::invalid(format!("assignment names missing cluster {id}")));
    }
    let rebuilt: Vec<Result<Option<(ClusterId, Cluster)>>> = ids
        .par_iter()
        .map(|&id| {
            let old = previous.get(&id);
            let base = old.and_then(|c| c.base.clone());
            let locked = old.is_some_and(|c| c.locked);
            let mut stats = base.clone().unwrap_or_else(|| empty.clone());
            let list = members.get(&id).map(Vec::as_slice).unwrap_or(&[]);
            for &i in list {
                if !pinned[i] {
                    stats.update(&aligned[i], &rho[i], Sign::Add)?;
                }
            }
            if !locked && stats.count() == 0 {
                return Ok(None);
            }
            Ok(Some((
                id,
                Cluster {
                    stats,
                    base,
                    members: list.len(),
                    locked,
                },
            )))
        })
        .collect();
    let mut out = BTreeMap::new();
    for r in rebuilt {
        if let Some((id, c)) = r? {
            out.insert(id, c);
        }
    }
    Ok(out)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".into()
    }
}

impl JacState {
    /// One map/reduce iteration on a pool of `workers` threads, using the
    /// importance sampler. On error the state is left unchanged.
    pub fn parallel_iteration(
        &mut self,
        workers: usize,
        config: &JacConfig,
    ) -> Result<IterationSummary> {
        self.parallel_iteration_with(workers, config, |_| {})
    }

    /// As [`JacState::parallel_iteration`], calling `hook(i)` inside the map
    /// task of every resampled item before it runs.
    pub fn parallel_iteration_with(
        &mut self,
        workers: usize,
        config: &JacConfig,
        hook: impl Fn(usize) + Sync,
    ) -> Result<IterationSummary> {
        if workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        if config.sampler != Sampler::Importance {
            return Err(Error::invalid(
                "the parallel schedule supports the importance sampler only",
            ));
        }
        if config.samples == 0 {
            return Err(Error::invalid("importance sampler needs at least one sample"));
        }
        self.check_gamma_rule()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Worker(e.to_string()))?;
        // Drawn on a clone so that a failed iteration leaves the state intact.
        let mut rng = self.rng.clone();
        let snapshot = Snapshot::new(self, config, rng.random());

        let outputs: Vec<Result<Option<MapOutput>>> = pool.install(|| {
            (0..self.items.len())
                .into_par_iter()
                .map(|i| {
                    if self.pinned[i] {
                        return Ok(None);
                    }
                    catch_unwind(AssertUnwindSafe(|| {
                        hook(i);
                        map_item(
                            &snapshot,
                            &self.family,
                            i,
                            &self.items[i],
                            self.z[i],
                            (&self.rho[i], &self.aligned[i]),
                            config.samples,
                        )
                    }))
                    .map_err(|p| Error::Worker(format!("item {i}: {}", panic_message(p))))?
                    .map(Some)
                })
                .collect()
        });

        let mut z = self.z.clone();
        let mut rho = self.rho.clone();
        let mut aligned = self.aligned.clone();
        let mut calls = 0u64;
        let fresh_id = self.next_id;
        for (i, out) in outputs.into_iter().enumerate() {
            let Some(out) = out? else { continue };
            z[i] = Some(out.cluster.unwrap_or(fresh_id));
            rho[i] = out.rho;
            aligned[i] = out.aligned;
            calls += out.transform_calls as u64;
        }
        let empty = self.priors.empty_component();
        let clusters = pool.install(|| {
            reduce_clusters(&self.clusters, &empty, &z, &aligned, &rho, &self.pinned, fresh_id)
        })?;

        let uses_fresh = clusters.contains_key(&fresh_id);
        let old_z = std::mem::replace(&mut self.z, z);
        let old_rho = std::mem::replace(&mut self.rho, rho);
        let old_aligned = std::mem::replace(&mut self.aligned, aligned);
        let old_clusters = std::mem::replace(&mut self.clusters, clusters);
        if let Err(e) = self.validate() {
            self.z = old_z;
            self.rho = old_rho;
            self.aligned = old_aligned;
            self.clusters = old_clusters;
            return Err(e);
        }
        if uses_fresh {
            self.next_id += 1;
        }
        self.rng = rng;
        self.transform_calls += calls;
        if config.resample_gamma {
            self.resample_gamma();
        }
        self.iteration += 1;
        Ok(self.summary())
    }

    /// Runs `iterations` parallel iterations, recording the trace and the
    /// highest-scoring state.
    pub fn run_parallel(
        &mut self,
        iterations: usize,
        workers: usize,
        config: &JacConfig,
    ) -> Result<RunTrace> {
        self.run_with(iterations, |state| state.parallel_iteration(workers, config))
    }
}
