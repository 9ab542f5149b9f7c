//! Synthetic datasets: warped curve families and rotated 2D point groups.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::item::Shape;
use crate::transforms::TransformFamily;

/// Length of the built-in base curves.
pub const BASE_LEN: usize = 128;

/// Names of the built-in base curves, in index order.
pub const BASE_NAMES: [&str; 4] = ["bump", "double-bump", "ramp-plateau", "damped-sine"];

fn grid(len: usize) -> impl Iterator<Item = f64> {
    let last = (len - 1) as f64;
    (0..len).map(move |j| j as f64 / last)
}

fn gauss(u: f64, centre: f64, width: f64) -> f64 {
    let d = (u - centre) / width;
    (-0.5 * d * d).exp()
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Built-in base curve `index` (see [`BASE_NAMES`]) sampled at `len` points.
pub fn base_curve(index: usize, len: usize) -> Vec<f64> {
    grid(len)
        .map(|u| match index % 4 {
            0 => gauss(u, 0.5, 0.1),
            1 => 0.8 * gauss(u, 0.3, 0.07) + gauss(u, 0.7, 0.07),
            2 => smoothstep((u - 0.15) / 0.3) - 0.6 * smoothstep((u - 0.75) / 0.15),
            _ => (-3.0 * u).exp() * (6.0 * PI * u).sin(),
        })
        .collect()
}

/// All four built-in bases at [`BASE_LEN`].
pub fn base_curves() -> Vec<Vec<f64>> {
    (0..4).map(|k| base_curve(k, BASE_LEN)).collect()
}

fn amplitude_range(x: &[f64]) -> f64 {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveSynthConfig {
    /// Curves generated per base.
    pub count: usize,
    /// Passed to the curve family's random draw.
    pub magnitude: f64,
    /// Observation noise std as a fraction of each base's value range.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for CurveSynthConfig {
    fn default() -> Self {
        Self {
            count: 50,
            magnitude: 0.3,
            noise_fraction: 0.01,
            seed: 0,
        }
    }
}

/// Random smooth warps of each base curve plus Gaussian observation noise.
/// Labels give the base index.
pub fn synth_curves(bases: &[Vec<f64>], config: &CurveSynthConfig) -> Result<Dataset> {
    if config.count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let Some(len) = bases.first().map(Vec::len) else {
        return Err(Error::invalid("no base curves"));
    };
    if bases.iter().any(|b| b.len() != len) {
        return Err(Error::invalid("base curves differ in length"));
    }
    let shape = Shape::Curve { len };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut items = Vec::with_capacity(bases.len() * config.count);
    let mut labels = Vec::with_capacity(items.capacity());
    for (label, base) in bases.iter().enumerate() {
        let range = amplitude_range(base);
        let family = TransformFamily::from_name("curve14", shape)?.with_value_range(range);
        let noise = config.noise_fraction * range;
        for _ in 0..config.count {
            let rho = family.random_params(config.magnitude, &mut rng);
            let mut x = family.apply(base, &rho)?;
            if noise > 0.0 {
                for v in &mut x {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += noise * z;
                }
            }
            items.push(x);
            labels.push(label);
        }
    }
    Dataset::new(shape, items, Some(labels))
}

/// A group of points around the origin: radius `radius` (plus Gaussian
/// jitter) at angles drawn from `N(angle, angle_spread²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointGroup {
    pub radius: f64,
    pub radial_jitter: f64,
    pub angle: f64,
    pub angle_spread: f64,
    pub count: usize,
}

/// Two radial groups on an inner and an outer ring, spread over wide arcs.
pub fn two_ring_groups(count: usize) -> Vec<PointGroup> {
    vec![
        PointGroup {
            radius: 1.0,
            radial_jitter: 0.05,
            angle: 0.5,
            angle_spread: 0.8,
            count,
        },
        PointGroup {
            radius: 3.0,
            radial_jitter: 0.05,
            angle: 2.5,
            angle_spread: 0.8,
            count,
        },
    ]
}

pub fn synth_points2d(groups: &[PointGroup], seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let mut labels = Vec::new();
    for (label, g) in groups.iter().enumerate() {
        if g.radius.is_nan() || g.radius <= 0.0 {
            return Err(Error::invalid(format!("radius must be positive, got {}", g.radius)));
        }
        if g.radial_jitter < 0.0 || g.angle_spread < 0.0 {
            return Err(Error::invalid("spreads must be non-negative"));
        }
        let angle = Normal::new(g.angle, g.angle_spread).map_err(|e| Error::invalid(e.to_string()))?;
        let radius =
            Normal::new(g.radius, g.radial_jitter).map_err(|e| Error::invalid(e.to_string()))?;
        for _ in 0..g.count {
            let a = angle.sample(&mut rng);
            let r = radius.sample(&mut rng);
            items.push(vec![r * a.cos(), r * a.sin()]);
            labels.push(label);
        }
    }
    Dataset::new(Shape::Point2, items, Some(labels))
}
