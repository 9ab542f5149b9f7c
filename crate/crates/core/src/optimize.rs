//! Derivative-free maximization of a transform objective.
//!
//! A short random screen around the starting point (plus the identity) picks
//! a basin, then coordinate-wise golden-section passes refine it. The result
//! never scores below the starting point.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    /// Gaussian perturbations of the start evaluated in the screen.
    pub perturbations: usize,
    /// Perturbation std as a multiple of each scale hint.
    pub perturb_scale: f64,
    /// Coordinate-wise golden-section passes.
    pub passes: usize,
    /// Half-width of each golden-section bracket, in scale hints.
    pub bracket: f64,
    /// Golden-section stops once the bracket is this fraction of a hint.
    pub tolerance: f64,
    /// Maximum objective evaluations per call.
    pub budget: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            perturbations: 20,
            perturb_scale: 0.25,
            passes: 2,
            bracket: 1.0,
            tolerance: 0.01,
            budget: 1000,
        }
    }
}

impl OptimizerConfig {
    pub fn with_budget(&self, budget: usize) -> Self {
        Self {
            budget: budget.max(1),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    pub rho: Vec<f64>,
    pub score: f64,
    pub evaluations: usize,
}

struct Search<F> {
    objective: F,
    budget: usize,
    evaluations: usize,
    best: Optimum,
}

impl<F: FnMut(&[f64]) -> f64> Search<F> {
    fn exhausted(&self) -> bool {
        self.evaluations >= self.budget
    }

    /// Scores `rho`, treating NaN as `-inf`, and records it if best so far.
    fn eval(&mut self, rho: &[f64]) -> f64 {
        self.evaluations += 1;
        let mut s = (self.objective)(rho);
        if s.is_nan() {
            s = f64::NEG_INFINITY;
        }
        if s > self.best.score {
            self.best.score = s;
            self.best.rho.clear();
            self.best.rho.extend_from_slice(rho);
        }
        s
    }
}

/// Maximizes `objective` starting from `init`.
pub fn optimize_rho<F, R>(
    objective: F,
    init: &[f64],
    hints: &[f64],
    config: &OptimizerConfig,
    rng: &mut R,
) -> Optimum
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    debug_assert_eq!(init.len(), hints.len());
    let mut search = Search {
        objective,
        budget: config.budget.max(1),
        evaluations: 0,
        best: Optimum {
            rho: init.to_vec(),
            score: f64::NEG_INFINITY,
            evaluations: 0,
        },
    };
    let init_score = search.eval(init);
    // Keep init as the incumbent even if it scored -inf.
    if search.best.score == f64::NEG_INFINITY {
        search.best.rho = init.to_vec();
        search.best.score = init_score;
    }
    let dim = init.len();
    if dim == 0 {
        search.best.evaluations = search.evaluations;
        return search.best;
    }

    let zero = vec![0.0; dim];
    if init != zero.as_slice() && !search.exhausted() {
        search.eval(&zero);
    }
    let mut candidate = vec![0.0; dim];
    for _ in 0..config.perturbations {
        if search.exhausted() {
            break;
        }
        for ((c, x), h) in candidate.iter_mut().zip(init).zip(hints) {
            let z: f64 = StandardNormal.sample(rng);
            *c = x + config.perturb_scale * h * z;
        }
        search.eval(&candidate);
    }

    let mut point = search.best.rho.clone();
    'passes: for _ in 0..config.passes {
        for (d, &hint) in hints.iter().enumerate().take(dim) {
            if search.exhausted() {
                break 'passes;
            }
            let center = search.best.rho[d];
            point.copy_from_slice(&search.best.rho);
            let half = config.bracket * hint;
            let tol = config.tolerance * hint;
            golden_line(&mut search, &mut point, d, center - half, center + half, tol);
        }
    }
    search.best.evaluations = search.evaluations;
    search.best
}

/// Golden-section search for a maximum along coordinate `d` of `point`.
fn golden_line<F: FnMut(&[f64]) -> f64>(
    search: &mut Search<F>,
    point: &mut [f64],
    d: usize,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) {
    if search.exhausted() {
        return;
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    point[d] = x1;
    let mut f1 = search.eval(point);
    if search.exhausted() {
        return;
    }
    point[d] = x2;
    let mut f2 = search.eval(point);
    while hi - lo > tol && !search.exhausted() {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            point[d] = x1;
            f1 = search.eval(point);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            point[d] = x2;
            f2 = search.eval(point);
        }
    }
}
