//! Conjugate exponential-family components.
//!
//! Three families back the model: a per-pixel Beta–Bernoulli product for
//! images, a per-dimension Normal–Inverse-Gamma diagonal Gaussian for curves
//! and points, and a zero-mean diagonal Gaussian with per-dimension
//! Inverse-Gamma variance for transformation parameters. Each keeps additive
//! sufficient statistics so that an item can be added or removed in `O(D)`,
//! and exposes two frozen densities over a single new observation:
//!
//! - the posterior predictive, with parameters integrated out;
//! - the plug-in density at the posterior mode.
//!
//! Densities are precomputed into a [`Density`] so that repeated evaluation
//! against fixed statistics (the inner loop of every sampler) costs one pass
//! over the vector.

use std::f64::consts::PI;

use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Clamp applied to Bernoulli modes so downstream logs stay finite.
pub const MODE_EPS: f64 = 1e-6;

/// Direction of a sufficient-statistic update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Add,
    Remove,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Add => 1.0,
            Sign::Remove => -1.0,
        }
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn check_finite(item: &[f64]) -> Result<()> {
    if item.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn bump_count(count: &mut u64, sign: Sign) -> Result<()> {
    match sign {
        Sign::Add => *count += 1,
        Sign::Remove => {
            if *count == 0 {
                return Err(Error::EmptyStats);
            }
            *count -= 1;
        }
    }
    Ok(())
}

/// A frozen density over one vector observation.
#[derive(Clone, Debug, PartialEq)]
pub enum Density {
    /// `log p(y) = base + Σ_d slope_d y_d`; covers soft Bernoulli pixels.
    Bernoulli { base: f64, slope: Vec<f64> },
    /// Independent Student-t per dimension with a shared degree of freedom.
    StudentT {
        dof: f64,
        loc: Vec<f64>,
        /// `1 / (dof · scale²)` per dimension.
        inv_dof_scale2: Vec<f64>,
        norm: f64,
    },
    /// Independent Gaussians per dimension.
    Normal {
        loc: Vec<f64>,
        inv_var: Vec<f64>,
        norm: f64,
    },
}

impl Density {
    pub fn dim(&self) -> usize {
        match self {
            Density::Bernoulli { slope, .. } => slope.len(),
            Density::StudentT { loc, .. } | Density::Normal { loc, .. } => loc.len(),
        }
    }

    /// Log density at `x`. The caller guarantees the dimension.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            Density::Bernoulli { base, slope } => {
                base + slope.iter().zip(x).map(|(s, v)| s * v).sum::<f64>()
            }
            Density::StudentT {
                dof,
                loc,
                inv_dof_scale2,
                norm,
            } => {
                let half = 0.5 * (dof + 1.0);
                let tail: f64 = x
                    .iter()
                    .zip(loc)
                    .zip(inv_dof_scale2)
                    .map(|((v, m), w)| {
                        let d = v - m;
                        (d * d * w).ln_1p()
                    })
                    .sum();
                norm - half * tail
            }
            Density::Normal { loc, inv_var, norm } => {
                let q: f64 = x
                    .iter()
                    .zip(loc)
                    .zip(inv_var)
                    .map(|((v, m), w)| {
                        let d = v - m;
                        d * d * w
                    })
                    .sum();
                norm - 0.5 * q
            }
        }
    }

    /// Checked variant of [`Density::log_density`].
    pub fn try_log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_finite(x)?;
        Ok(self.log_density(x))
    }

    fn student_t(dof: f64, loc: Vec<f64>, scale2: &[f64]) -> Self {
        let c0 = ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI).ln();
        let norm = scale2.iter().map(|s2| c0 - 0.5 * s2.ln()).sum();
        let inv_dof_scale2 = scale2.iter().map(|s2| 1.0 / (dof * s2)).collect();
        Density::StudentT {
            dof,
            loc,
            inv_dof_scale2,
            norm,
        }
    }

    fn normal(loc: Vec<f64>, var: &[f64]) -> Self {
        let norm = var.iter().map(|v| -0.5 * (2.0 * PI * v).ln()).sum();
        let inv_var = var.iter().map(|v| 1.0 / v).collect();
        Density::Normal { loc, inv_var, norm }
    }
}

// ---------------------------------------------------------------------------
// Beta–Bernoulli
// ---------------------------------------------------------------------------

/// Independent `Beta(a_d, b_d)` priors, one per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaPrior {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl BetaPrior {
    /// The same `Beta(a, b)` on every pixel.
    pub fn shared(dim: usize, a: f64, b: f64) -> Self {
        Self {
            a: vec![a; dim],
            b: vec![b; dim],
        }
    }

    /// `Beta(a + s·m_d, b + s·(1 - m_d))`: a shared floor plus `strength`
    /// pseudo-observations of the mean image `mean`.
    pub fn centred(mean: &[f64], strength: f64, a: f64, b: f64) -> Self {
        Self {
            a: mean.iter().map(|m| a + strength * m).collect(),
            b: mean.iter().map(|m| b + strength * (1.0 - m)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }
}

/// Per-pixel Beta–Bernoulli statistics.
///
/// Pixel values in `[0, 1]` are accepted as soft observations.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliStats {
    count: u64,
    ones: Vec<f64>,
    prior: BetaPrior,
}

impl BernoulliStats {
    /// Empty statistics under a shared `Beta(a, b)` prior.
    pub fn new(dim: usize, prior_a: f64, prior_b: f64) -> Self {
        Self::with_prior(BetaPrior::shared(dim, prior_a, prior_b))
    }

    pub fn with_prior(prior: BetaPrior) -> Self {
        Self {
            count: 0,
            ones: vec![0.0; prior.dim()],
            prior,
        }
    }

    /// Rebuilds statistics from raw fields, as read from a checkpoint.
    pub fn from_parts(count: u64, ones: Vec<f64>, prior: BetaPrior) -> Self {
        Self { count, ones, prior }
    }

    pub fn dim(&self) -> usize {
        self.ones.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn ones(&self) -> &[f64] {
        &self.ones
    }

    pub fn prior(&self) -> &BetaPrior {
        &self.prior
    }

    fn pixels(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.ones
            .iter()
            .zip(&self.prior.a)
            .zip(&self.prior.b)
            .map(|((&o, &a), &b)| (o, a, b))
    }

    pub fn update(&mut self, item: &[f64], sign: Sign) -> Result<()> {
        check_dim(self.dim(), item.len())?;
        bump_count(&mut self.count, sign)?;
        let f = sign.factor();
        for (o, v) in self.ones.iter_mut().zip(item) {
            *o += f * v;
        }
        Ok(())
    }

    fn success_probs(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.count as f64;
        self.pixels().map(move |(o, a, b)| (o + a) / (n + a + b))
    }

    pub fn predictive(&self) -> Density {
        bernoulli_density(self.success_probs())
    }

    pub fn log_predictive(&self, item: &[f64]) -> Result<f64> {
        self.predictive().try_log_density(item)
    }

    /// Per-pixel posterior mode, clamped to `[ε, 1-ε]`.
    ///
    /// When the Beta posterior has no interior mode formula (both shape
    /// parameters at most one, e.g. the empty `Beta(1,1)` case) the posterior
    /// mean is used before clamping.
    pub fn mode(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.pixels()
            .map(|(o, a, b)| {
                let denom = n + a + b - 2.0;
                let m = if denom > 0.0 {
                    (o + a - 1.0) / denom
                } else {
                    (o + a) / (n + a + b)
                };
                if m.is_finite() {
                    m.clamp(MODE_EPS, 1.0 - MODE_EPS)
                } else {
                    0.5
                }
            })
            .collect()
    }

    pub fn mode_density(&self) -> Density {
        bernoulli_density(self.mode().into_iter())
    }

    /// Log marginal likelihood of all absorbed observations.
    pub fn log_marginal(&self) -> f64 {
        let n = self.count as f64;
        self.pixels()
            .map(|(o, a, b)| ln_beta(a + o, b + n - o) - ln_beta(a, b))
            .sum()
    }
}

fn bernoulli_density(probs: impl Iterator<Item = f64>) -> Density {
    let mut base = 0.0;
    let slope = probs
        .map(|p| {
            let l1 = p.ln();
            let l0 = (-p).ln_1p();
            base += l0;
            l1 - l0
        })
        .collect();
    Density::Bernoulli { base, slope }
}

// ---------------------------------------------------------------------------
// Normal–Inverse-Gamma diagonal Gaussian
// ---------------------------------------------------------------------------

/// Normal–Inverse-Gamma prior applied independently to each dimension:
/// `σ² ~ IG(a0, b0)`, `μ | σ² ~ N(μ0, σ²/κ0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NigPrior {
    pub mu0: Vec<f64>,
    pub kappa0: f64,
    pub a0: f64,
    pub b0: f64,
}

impl NigPrior {
    pub fn isotropic(dim: usize, mu0: f64, kappa0: f64, a0: f64, b0: f64) -> Self {
        Self {
            mu0: vec![mu0; dim],
            kappa0,
            a0,
            b0,
        }
    }
}

/// Posterior parameters for one dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NigPosterior {
    pub mu: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussianStats {
    count: u64,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    prior: NigPrior,
}

impl DiagGaussianStats {
    pub fn new(prior: NigPrior) -> Self {
        let dim = prior.mu0.len();
        Self {
            count: 0,
            sum: vec![0.0; dim],
            sumsq: vec![0.0; dim],
            prior,
        }
    }

    pub fn from_parts(count: u64, sum: Vec<f64>, sumsq: Vec<f64>, prior: NigPrior) -> Self {
        Self {
            count,
            sum,
            sumsq,
            prior,
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> &[f64] {
        &self.sum
    }

    pub fn sumsq(&self) -> &[f64] {
        &self.sumsq
    }

    pub fn prior(&self) -> &NigPrior {
        &self.prior
    }

    pub fn update(&mut self, item: &[f64], sign: Sign) -> Result<()> {
        check_dim(self.dim(), item.len())?;
        bump_count(&mut self.count, sign)?;
        let f = sign.factor();
        for ((s, q), v) in self.sum.iter_mut().zip(self.sumsq.iter_mut()).zip(item) {
            *s += f * v;
            *q += f * v * v;
        }
        Ok(())
    }

    /// Posterior parameters of dimension `d`.
    pub fn posterior(&self, d: usize) -> NigPosterior {
        let p = &self.prior;
        let n = self.count as f64;
        let kappa = p.kappa0 + n;
        let a = p.a0 + 0.5 * n;
        let (s, q, mu0) = (self.sum[d], self.sumsq[d], p.mu0[d]);
        let mu = (p.kappa0 * mu0 + s) / kappa;
        let b = if self.count == 0 {
            p.b0
        } else {
            let centered = (q - s * s / n).max(0.0);
            let shift = s - n * mu0;
            p.b0 + 0.5 * centered + p.kappa0 * shift * shift / (2.0 * n * kappa)
        };
        NigPosterior { mu, kappa, a, b }
    }

    fn posteriors(&self) -> impl Iterator<Item = NigPosterior> + '_ {
        (0..self.dim()).map(|d| self.posterior(d))
    }

    pub fn predictive(&self) -> Density {
        let mut loc = Vec::with_capacity(self.dim());
        let mut scale2 = Vec::with_capacity(self.dim());
        let mut dof = 2.0 * self.prior.a0;
        for post in self.posteriors() {
            dof = 2.0 * post.a;
            loc.push(post.mu);
            scale2.push(post.b * (post.kappa + 1.0) / (post.a * post.kappa));
        }
        Density::student_t(dof, loc, &scale2)
    }

    pub fn log_predictive(&self, item: &[f64]) -> Result<f64> {
        self.predictive().try_log_density(item)
    }

    /// Joint posterior mode: `(μ_n, b_n / (a_n + 3/2))` per dimension.
    pub fn mode(&self) -> (Vec<f64>, Vec<f64>) {
        self.posteriors().map(|p| (p.mu, p.b / (p.a + 1.5))).unzip()
    }

    pub fn mode_density(&self) -> Density {
        let (loc, var) = self.mode();
        Density::normal(loc, &var)
    }

    pub fn log_marginal(&self) -> f64 {
        let p = &self.prior;
        let n = self.count as f64;
        let c = ln_gamma(p.a0 + 0.5 * n) - ln_gamma(p.a0) + p.a0 * p.b0.ln()
            - 0.5 * n * (2.0 * PI).ln();
        self.posteriors()
            .map(|post| c - post.a * post.b.ln() + 0.5 * (p.kappa0 / post.kappa).ln())
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Zero-mean Gaussian with Inverse-Gamma variances (transform prior)
// ---------------------------------------------------------------------------

/// Statistics of transformation parameters: `ρ_d ~ N(0, σ_d²)`,
/// `σ_d² ~ IG(a, b_d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformPriorStats {
    count: u64,
    sumsq: Vec<f64>,
    prior_a: f64,
    prior_b: Vec<f64>,
}

impl TransformPriorStats {
    pub fn new(prior_a: f64, prior_b: Vec<f64>) -> Self {
        Self {
            count: 0,
            sumsq: vec![0.0; prior_b.len()],
            prior_a,
            prior_b,
        }
    }

    pub fn from_parts(count: u64, sumsq: Vec<f64>, prior_a: f64, prior_b: Vec<f64>) -> Self {
        Self {
            count,
            sumsq,
            prior_a,
            prior_b,
        }
    }

    pub fn dim(&self) -> usize {
        self.sumsq.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sumsq(&self) -> &[f64] {
        &self.sumsq
    }

    pub fn prior(&self) -> (f64, &[f64]) {
        (self.prior_a, &self.prior_b)
    }

    pub fn update(&mut self, rho: &[f64], sign: Sign) -> Result<()> {
        check_dim(self.dim(), rho.len())?;
        bump_count(&mut self.count, sign)?;
        let f = sign.factor();
        for (q, v) in self.sumsq.iter_mut().zip(rho) {
            *q += f * v * v;
            if *q < 0.0 {
                // Cancellation residue from removing the last contribution.
                *q = 0.0;
            }
        }
        Ok(())
    }

    fn posterior_shape(&self) -> f64 {
        self.prior_a + 0.5 * self.count as f64
    }

    fn posterior_scales(&self) -> impl Iterator<Item = f64> + '_ {
        self.prior_b
            .iter()
            .zip(&self.sumsq)
            .map(|(b, q)| b + 0.5 * q)
    }

    pub fn predictive(&self) -> Density {
        let a = self.posterior_shape();
        let scale2: Vec<f64> = self.posterior_scales().map(|b| b / a).collect();
        Density::student_t(2.0 * a, vec![0.0; self.dim()], &scale2)
    }

    pub fn log_predictive(&self, rho: &[f64]) -> Result<f64> {
        self.predictive().try_log_density(rho)
    }

    /// Posterior mode of each variance, `b_n / (a_n + 1)`.
    pub fn mode(&self) -> Vec<f64> {
        let a = self.posterior_shape();
        self.posterior_scales().map(|b| b / (a + 1.0)).collect()
    }

    pub fn mode_density(&self) -> Density {
        Density::normal(vec![0.0; self.dim()], &self.mode())
    }

    pub fn log_marginal(&self) -> f64 {
        let a0 = self.prior_a;
        let an = self.posterior_shape();
        let n = self.count as f64;
        let c = ln_gamma(an) - ln_gamma(a0) - 0.5 * n * (2.0 * PI).ln();
        self.prior_b
            .iter()
            .zip(self.posterior_scales())
            .map(|(b0, bn)| c + a0 * b0.ln() - an * bn.ln())
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Data-side dispatch
// ---------------------------------------------------------------------------

/// Prior for the data distribution `F_D`.
#[derive(Clone, Debug, PartialEq)]
pub enum DataPrior {
    Bernoulli(BetaPrior),
    Gaussian(NigPrior),
}

impl DataPrior {
    pub fn dim(&self) -> usize {
        match self {
            DataPrior::Bernoulli(p) => p.dim(),
            DataPrior::Gaussian(p) => p.mu0.len(),
        }
    }

    pub fn empty_stats(&self) -> DataStats {
        match self {
            DataPrior::Bernoulli(p) => DataStats::Bernoulli(BernoulliStats::with_prior(p.clone())),
            DataPrior::Gaussian(p) => DataStats::Gaussian(DiagGaussianStats::new(p.clone())),
        }
    }
}

/// Sufficient statistics of `F_D` for one component.
#[derive(Clone, Debug, PartialEq)]
pub enum DataStats {
    Bernoulli(BernoulliStats),
    Gaussian(DiagGaussianStats),
}

impl DataStats {
    pub fn dim(&self) -> usize {
        match self {
            DataStats::Bernoulli(s) => s.dim(),
            DataStats::Gaussian(s) => s.dim(),
        }
    }

    pub fn count(&self) -> u64 {
        match self {
            DataStats::Bernoulli(s) => s.count(),
            DataStats::Gaussian(s) => s.count(),
        }
    }

    pub fn update(&mut self, item: &[f64], sign: Sign) -> Result<()> {
        match self {
            DataStats::Bernoulli(s) => s.update(item, sign),
            DataStats::Gaussian(s) => s.update(item, sign),
        }
    }

    pub fn predictive(&self) -> Density {
        match self {
            DataStats::Bernoulli(s) => s.predictive(),
            DataStats::Gaussian(s) => s.predictive(),
        }
    }

    pub fn log_predictive(&self, item: &[f64]) -> Result<f64> {
        self.predictive().try_log_density(item)
    }

    pub fn mode_density(&self) -> Density {
        match self {
            DataStats::Bernoulli(s) => s.mode_density(),
            DataStats::Gaussian(s) => s.mode_density(),
        }
    }

    pub fn log_marginal(&self) -> f64 {
        match self {
            DataStats::Bernoulli(s) => s.log_marginal(),
            DataStats::Gaussian(s) => s.log_marginal(),
        }
    }

    /// Largest absolute difference between the moment fields of two
    /// statistics of the same family, scaled by `max(1, |value|)`.
    /// Counts must match exactly; otherwise the result is infinite.
    pub fn max_deviation(&self, other: &DataStats) -> f64 {
        match (self, other) {
            (DataStats::Bernoulli(a), DataStats::Bernoulli(b)) if a.count == b.count => {
                rel_dev(&a.ones, &b.ones)
            }
            (DataStats::Gaussian(a), DataStats::Gaussian(b)) if a.count == b.count => {
                rel_dev(&a.sum, &b.sum).max(rel_dev(&a.sumsq, &b.sumsq))
            }
            _ => f64::INFINITY,
        }
    }
}

impl TransformPriorStats {
    /// See [`DataStats::max_deviation`].
    pub fn max_deviation(&self, other: &TransformPriorStats) -> f64 {
        if self.count != other.count {
            return f64::INFINITY;
        }
        rel_dev(&self.sumsq, &other.sumsq)
    }
}

fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Cached statistics for one mixture component: the data distribution and
/// the transformation distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentStats {
    pub data: DataStats,
    pub transform: TransformPriorStats,
}

impl ComponentStats {
    pub fn new(data: DataStats, transform: TransformPriorStats) -> Self {
        Self { data, transform }
    }

    /// Adds or removes an aligned item `y` together with its parameters `ρ`.
    /// Either both statistics change or neither does.
    pub fn update(&mut self, y: &[f64], rho: &[f64], sign: Sign) -> Result<()> {
        check_dim(self.data.dim(), y.len())?;
        check_dim(self.transform.dim(), rho.len())?;
        if sign == Sign::Remove && (self.data.count() == 0 || self.transform.count() == 0) {
            return Err(Error::EmptyStats);
        }
        self.data.update(y, sign)?;
        self.transform.update(rho, sign)
    }

    pub fn count(&self) -> u64 {
        self.data.count()
    }

    pub fn log_marginal(&self) -> f64 {
        self.data.log_marginal() + self.transform.log_marginal()
    }

    pub fn max_deviation(&self, other: &ComponentStats) -> f64 {
        self.data
            .max_deviation(&other.data)
            .max(self.transform.max_deviation(&other.transform))
    }
}
