//! Smooth warps of uniformly sampled curves on `u ∈ [0, 1]`.
//!
//! The output of `τ(x, ρ)` is `exp(s + Σ_k d_k B_k(u)) · x(w(u)) + t` with the
//! time warp `w(u) = u + Σ_{k=1..4} c_k sin(kπu)`. `B_k` are eight cubic
//! B-spline bumps centred on an even grid over `[0, 1]`. The warp fixes both
//! endpoints and is strictly increasing while `Σ kπ|c_k| < 1`.
//!
//! Parameter layout: `[c1..c4, d1..d8, s, t]`, or `[c1..c4, s, t]` when the
//! nonlinear amplitude field is disabled.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Number of sinusoidal time-warp coefficients.
pub const CURVE_WARPS: usize = 4;
/// Number of B-spline log-amplitude coefficients.
pub const CURVE_BASES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct CurveWarp {
    len: usize,
    amplitude: bool,
    hints: Vec<f64>,
    /// `basis[j][k] = B_k(u_j)` on the sampling grid.
    basis: Vec<[f64; CURVE_BASES]>,
}

/// Cubic B-spline kernel with support `[-2, 2]`.
fn bspline(t: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    } else if a < 2.0 {
        let r = 2.0 - a;
        r * r * r / 6.0
    } else {
        0.0
    }
}

/// `B_k(u)` for `k = 0..8`.
pub fn amplitude_basis(u: f64) -> [f64; CURVE_BASES] {
    let spacing = (CURVE_BASES - 1) as f64;
    std::array::from_fn(|k| bspline(u * spacing - k as f64))
}

/// `Σ kπ|c_k|`, the monotonicity margin of the time warp.
pub fn warp_bound(c: &[f64]) -> f64 {
    c.iter()
        .enumerate()
        .map(|(k, v)| (k + 1) as f64 * PI * v.abs())
        .sum()
}

/// `w(u) - u`.
fn warp_offset(c: &[f64], u: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(k, v)| v * ((k + 1) as f64 * PI * u).sin())
        .sum()
}

/// The time warp `w(u)`.
pub fn time_warp(c: &[f64], u: f64) -> f64 {
    u + warp_offset(c, u)
}

fn time_warp_slope(c: &[f64], u: f64) -> f64 {
    1.0 + c
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let f = (k + 1) as f64 * PI;
            v * f * (f * u).cos()
        })
        .sum::<f64>()
}

/// Solves `w(u) = v` for a monotone warp by safeguarded Newton iteration.
pub fn inverse_time_warp(c: &[f64], v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    if v >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut u = v;
    for _ in 0..60 {
        let r = time_warp(c, u) - v;
        if r.abs() < 1e-14 {
            break;
        }
        if r > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let next = u - r / time_warp_slope(c, u);
        u = if next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    u
}

struct Parts<'a> {
    c: &'a [f64],
    d: &'a [f64],
    s: f64,
    t: f64,
}

impl CurveWarp {
    pub fn new(len: usize, amplitude: bool) -> Self {
        let mut hints: Vec<f64> = (1..=CURVE_WARPS).map(|k| 0.15 / k as f64).collect();
        if amplitude {
            hints.extend([0.3; CURVE_BASES]);
        }
        hints.extend([0.3, 0.5]);
        let last = (len.max(2) - 1) as f64;
        let basis = (0..len).map(|j| amplitude_basis(j as f64 / last)).collect();
        Self {
            len,
            amplitude,
            hints,
            basis,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.hints.len()
    }

    pub fn has_amplitude_field(&self) -> bool {
        self.amplitude
    }

    pub fn hints(&self) -> &[f64] {
        &self.hints
    }

    pub(super) fn set_offset_hint(&mut self, hint: f64) {
        if let Some(h) = self.hints.last_mut() {
            *h = hint;
        }
    }

    fn parts<'a>(&self, rho: &'a [f64]) -> Parts<'a> {
        let n = rho.len();
        let d = if self.amplitude {
            &rho[CURVE_WARPS..CURVE_WARPS + CURVE_BASES]
        } else {
            &rho[CURVE_WARPS..CURVE_WARPS]
        };
        Parts {
            c: &rho[..CURVE_WARPS],
            d,
            s: rho[n - 2],
            t: rho[n - 1],
        }
    }

    pub fn check_monotone(&self, rho: &[f64]) -> Result<()> {
        let bound = warp_bound(&rho[..CURVE_WARPS]);
        if bound < 1.0 {
            Ok(())
        } else {
            Err(Error::NonMonotoneWarp(bound))
        }
    }

    fn log_amplitude(d: &[f64], basis: &[f64; CURVE_BASES]) -> f64 {
        d.iter().zip(basis).map(|(a, b)| a * b).sum()
    }

    pub(super) fn forward(&self, rho: &[f64]) -> CurveResample {
        let p = self.parts(rho);
        let last = (self.len - 1) as f64;
        let mut positions = Vec::with_capacity(self.len);
        let mut amp = Vec::with_capacity(self.len);
        for (j, basis) in self.basis.iter().enumerate() {
            let u = j as f64 / last;
            positions.push(j as f64 + last * warp_offset(p.c, u));
            amp.push((p.s + Self::log_amplitude(p.d, basis)).exp());
        }
        CurveResample {
            positions,
            amp,
            pre: 0.0,
            post: p.t,
        }
    }

    pub(super) fn inverse(&self, rho: &[f64]) -> CurveResample {
        let p = self.parts(rho);
        let last = (self.len - 1) as f64;
        let mut positions = Vec::with_capacity(self.len);
        let mut amp = Vec::with_capacity(self.len);
        for j in 0..self.len {
            let u = inverse_time_warp(p.c, j as f64 / last);
            positions.push(u * last);
            let basis = amplitude_basis(u);
            amp.push((-p.s - Self::log_amplitude(p.d, &basis)).exp());
        }
        CurveResample {
            positions,
            amp,
            pre: -p.t,
            post: 0.0,
        }
    }
}

/// `out_j = amp_j · (x(positions_j) + pre) + post`, with `x` linearly
/// interpolated at fractional sample positions.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveResample {
    positions: Vec<f64>,
    amp: Vec<f64>,
    pre: f64,
    post: f64,
}

impl CurveResample {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.positions
            .iter()
            .zip(&self.amp)
            .map(|(&p, &a)| a * (lerp_at(x, p) + self.pre) + self.post)
            .collect()
    }
}

/// Linear interpolation of `x` at a fractional index, clamped to the ends.
pub(crate) fn lerp_at(x: &[f64], p: f64) -> f64 {
    let last = x.len() - 1;
    if p <= 0.0 {
        return x[0];
    }
    if p >= last as f64 {
        return x[last];
    }
    let i = p.floor() as usize;
    let f = p - i as f64;
    if f == 0.0 {
        x[i]
    } else {
        (1.0 - f) * x[i] + f * x[i + 1]
    }
}
