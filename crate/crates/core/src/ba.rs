//! Bayesian joint alignment of a single-cluster dataset.
//!
//! Every item is `x_i = τ(y_i, ρ_i)` with one shared data distribution and one
//! shared transform distribution, both integrated out. A sweep visits items in
//! random order; each site update removes the item from the cached statistics,
//! moves `ρ_i` to the maximizer of its leave-one-out conditional
//! `p(y_i | y_{-i}) p(ρ_i | ρ_{-i})` and adds it back.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expfam::{ComponentStats, Sign};
use crate::model::Priors;
use crate::optimize::{optimize_rho, OptimizerConfig};
use crate::transforms::TransformFamily;

#[derive(Clone, Debug, PartialEq)]
pub struct BaConfig {
    /// Upper bound on sweeps.
    pub sweeps: usize,
    /// Stop once a sweep improves the joint score by less than this
    /// fraction of its magnitude.
    pub rel_tol: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for BaConfig {
    fn default() -> Self {
        Self {
            sweeps: 30,
            rel_tol: 1e-4,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Conditional objective of one site before and after its update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteUpdate {
    pub item: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug)]
pub struct BaState {
    family: TransformFamily,
    items: Vec<Vec<f64>>,
    rho: Vec<Vec<f64>>,
    aligned: Vec<Vec<f64>>,
    stats: ComponentStats,
    priors: Priors,
    removed: Option<usize>,
    iteration: usize,
    rng: ChaCha8Rng,
}

impl BaState {
    /// Starts from the identity: `ρ_i = 0` and `y_i = x_i`.
    pub fn new(
        items: Vec<Vec<f64>>,
        family: TransformFamily,
        priors: Priors,
        seed: u64,
    ) -> Result<Self> {
        let mut stats = priors.empty_component();
        let zero = vec![0.0; family.dim()];
        for x in &items {
            stats.update(x, &zero, Sign::Add)?;
        }
        let n = items.len();
        Ok(Self {
            aligned: items.clone(),
            rho: vec![zero; n],
            family,
            items,
            stats,
            priors,
            removed: None,
            iteration: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
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

    pub fn rho(&self) -> &[Vec<f64>] {
        &self.rho
    }

    pub fn aligned(&self) -> &[Vec<f64>] {
        &self.aligned
    }

    pub fn stats(&self) -> &ComponentStats {
        &self.stats
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Takes item `i` out of the cached statistics.
    pub fn remove(&mut self, i: usize) -> Result<()> {
        if self.removed.is_some() {
            return Err(Error::invalid("another item is already removed"));
        }
        self.check_index(i)?;
        self.stats.update(&self.aligned[i], &self.rho[i], Sign::Remove)?;
        self.removed = Some(i);
        Ok(())
    }

    /// Puts the removed item `i` back with its current `ρ_i`.
    pub fn restore(&mut self, i: usize) -> Result<()> {
        if self.removed != Some(i) {
            return Err(Error::invalid(format!("item {i} is not removed")));
        }
        self.stats.update(&self.aligned[i], &self.rho[i], Sign::Add)?;
        self.removed = None;
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.items.len() {
            return Err(Error::invalid(format!("item index {i} out of range")));
        }
        Ok(())
    }

    /// `log p(y | y_{-i}) + log p(ρ | ρ_{-i})` for a candidate `ρ`, with
    /// `y = τ(x_i, ρ⁻¹)`. Item `i` must have been removed.
    pub fn objective(&self, i: usize, rho: &[f64]) -> Result<f64> {
        if self.removed != Some(i) {
            return Err(Error::invalid(format!("item {i} must be removed first")));
        }
        let y = self.family.align(&self.items[i], rho)?;
        Ok(self.family.data_weight(rho) * self.stats.data.log_predictive(&y)?
            + self.stats.transform.log_predictive(rho)?)
    }

    /// One site update on item `i`.
    pub fn update_site(&mut self, i: usize, config: &OptimizerConfig) -> Result<SiteUpdate> {
        self.remove(i)?;
        let data = self.stats.data.predictive();
        let transform = self.stats.transform.predictive();
        let family = &self.family;
        let x = &self.items[i];
        let objective = |rho: &[f64]| match family.align(x, rho) {
            Ok(y) => family.data_weight(rho) * data.log_density(&y) + transform.log_density(rho),
            Err(_) => f64::NEG_INFINITY,
        };
        let hints = family.scale_hints();
        let before = objective(&self.rho[i]);
        let best = optimize_rho(objective, &self.rho[i], &hints, config, &mut self.rng);
        if best.score > before {
            self.aligned[i] = self.family.align(&self.items[i], &best.rho)?;
            self.rho[i] = best.rho;
        }
        self.restore(i)?;
        Ok(SiteUpdate {
            item: i,
            before,
            after: best.score.max(before),
        })
    }

    /// One sweep over a fresh random permutation of the items.
    pub fn sweep(&mut self, config: &OptimizerConfig) -> Result<Vec<SiteUpdate>> {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.shuffle(&mut self.rng);
        let updates = order
            .into_iter()
            .map(|i| self.update_site(i, config))
            .collect::<Result<Vec<_>>>()?;
        self.iteration += 1;
        Ok(updates)
    }

    /// Log marginal likelihood of all aligned items and parameters.
    pub fn joint_log_score(&self) -> f64 {
        self.stats.log_marginal()
    }

    /// Runs sweeps until the sweep limit or relative convergence. Returns the
    /// joint score before the first sweep and after each one.
    pub fn run(&mut self, config: &BaConfig) -> Result<Vec<f64>> {
        let mut trace = vec![self.joint_log_score()];
        for _ in 0..config.sweeps {
            self.sweep(&config.optimizer)?;
            let prev = *trace.last().expect("non-empty trace");
            let cur = self.joint_log_score();
            trace.push(cur);
            if (cur - prev).abs() < config.rel_tol * prev.abs().max(1e-12) {
                break;
            }
        }
        Ok(trace)
    }

    /// Largest deviation between cached statistics and a from-scratch
    /// accumulation of the current `(y_i, ρ_i)`.
    pub fn stats_deviation(&self) -> Result<f64> {
        let mut fresh = self.priors.empty_component();
        for (i, (y, r)) in self.aligned.iter().zip(&self.rho).enumerate() {
            if Some(i) != self.removed {
                fresh.update(y, r, Sign::Add)?;
            }
        }
        Ok(self.stats.max_deviation(&fresh))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expfam::{BetaPrior, DataPrior};
    use crate::item::Shape;
    use crate::model::{DataModel, Hyperparams};

    fn rotation_state(points: Vec<Vec<f64>>) -> BaState {
        let fam = TransformFamily::from_name("rotation2d", Shape::Point2).unwrap();
        let priors =
            Priors::resolve(&Hyperparams::default(), DataModel::Gaussian, &points, 2, &fam)
                .unwrap();
        BaState::new(points, fam, priors, 42).unwrap()
    }

    #[test]
    fn single_item_prefers_identity() {
        let mut s = rotation_state(vec![vec![1.0, 0.5]]);
        s.sweep(&OptimizerConfig::default()).unwrap();
        // Prior predictive for y is broad; the transform prior dominates.
        assert!(s.rho()[0][0].abs() < 0.05, "{:?}", s.rho());
    }

    #[test]
    fn objective_requires_removal() {
        let mut s = rotation_state(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(s.objective(0, &[0.0]).is_err());
        s.remove(0).unwrap();
        assert!(s.objective(0, &[0.0]).unwrap().is_finite());
        assert!(s.remove(1).is_err());
        s.restore(0).unwrap();
    }

    #[test]
    fn constant_data_term_pulls_to_zero() {
        // Identical items under the identity family make the data term flat
        // in ρ; translation is used so ρ has a dimension.
        let fam = TransformFamily::from_name("translation", Shape::Vector { len: 1 }).unwrap();
        let items = vec![vec![0.0]; 3];
        let priors = Priors {
            data: DataPrior::Bernoulli(BetaPrior::shared(1, 1.0, 1.0)),
            transform_a: 2.0,
            transform_b: vec![1.0],
        };
        let mut s = BaState::new(items, fam, priors, 1).unwrap();
        s.rho[1] = vec![0.4];
        s.aligned[1] = vec![-0.4];
        s.stats = {
            let mut st = s.priors.empty_component();
            for i in 0..3 {
                st.update(&s.aligned[i], &s.rho[i], Sign::Add).unwrap();
            }
            st
        };
        // The Bernoulli term with an empty-ish prior is not flat in y, so use
        // a zero-slope density directly through the transform-only objective.
        s.remove(1).unwrap();
        let t = s.stats.transform.predictive();
        let best = optimize_rho(
            |r: &[f64]| t.log_density(r),
            &[0.4],
            &[1.0],
            &OptimizerConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        s.restore(1).unwrap();
        assert_eq!(best.rho, vec![0.0]);
    }

    #[test]
    fn site_updates_never_decrease() {
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|k| {
                let a = 0.1 * k as f64 - 0.5;
                vec![2.0 * a.cos(), 2.0 * a.sin()]
            })
            .collect();
        let mut s = rotation_state(pts);
        for _ in 0..3 {
            for u in s.sweep(&OptimizerConfig::default()).unwrap() {
                assert!(u.after >= u.before - 1e-6);
            }
            assert!(s.stats_deviation().unwrap() < 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let pts: Vec<Vec<f64>> = (0..8)
            .map(|k| vec![(k as f64).cos(), (k as f64).sin()])
            .collect();
        let mut a = rotation_state(pts.clone());
        let mut b = rotation_state(pts);
        let cfg = BaConfig {
            sweeps: 3,
            ..BaConfig::default()
        };
        a.run(&cfg).unwrap();
        b.run(&cfg).unwrap();
        assert_eq!(a.rho(), b.rho());
    }
}
