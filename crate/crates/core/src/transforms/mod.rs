//! Transformation families `τ(y, ρ)`.
//!
//! Families are treated as black boxes by the samplers: all they need is
//! [`TransformFamily::align`] (`y = τ(x, ρ⁻¹)`), the parameter dimension and a
//! per-dimension scale hint used for proposals, search brackets and prior
//! calibration. The zero vector is the identity in every family.

mod affine;
mod curve;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use affine::{AffineImage, Mat3};
pub use curve::{inverse_time_warp, time_warp, warp_bound, CurveWarp, CURVE_BASES, CURVE_WARPS};
pub(crate) use curve::lerp_at;

use crate::error::{Error, Result};
use crate::item::Shape;

/// Attempts per magnitude level before [`TransformFamily::random_params`]
/// halves the magnitude.
const MAX_DRAW_ATTEMPTS: usize = 1000;

/// A concrete, applicable transformation.
#[derive(Clone, Debug, PartialEq)]
pub enum Warp {
    Identity,
    Translate(Vec<f64>),
    /// Rotation of a 2D point about the origin.
    Rotate { cos: f64, sin: f64 },
    Affine(affine::AffineWarp),
    Curve(curve::CurveResample),
}

impl Warp {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Warp::Identity => x.to_vec(),
            Warp::Translate(t) => x.iter().zip(t).map(|(a, b)| a + b).collect(),
            Warp::Rotate { cos, sin } => {
                vec![cos * x[0] - sin * x[1], sin * x[0] + cos * x[1]]
            }
            Warp::Affine(w) => w.apply(x),
            Warp::Curve(c) => c.apply(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TransformFamily {
    /// No transformation; parameters are the empty vector.
    Identity,
    /// Additive offset on every coordinate.
    Translation { dim: usize, hint: f64 },
    /// Rotation of a 2D point about the origin by an angle in radians.
    Rotation2D { hint: f64 },
    Affine(AffineImage),
    Curve(CurveWarp),
}

impl TransformFamily {
    /// Names accepted by [`TransformFamily::from_name`].
    pub const NAMES: [&'static str; 6] = [
        "identity",
        "translation",
        "rotation2d",
        "affine7",
        "curve14",
        "curve13-noamp",
    ];

    /// Builds the family called `name` for items of the given shape.
    pub fn from_name(name: &str, shape: Shape) -> Result<Self> {
        let family = match name {
            "identity" => TransformFamily::Identity,
            "translation" => TransformFamily::Translation {
                dim: shape.len(),
                hint: 1.0,
            },
            "rotation2d" => {
                if shape != Shape::Point2 {
                    return Err(Error::invalid("rotation2d requires 2D points"));
                }
                TransformFamily::Rotation2D {
                    hint: std::f64::consts::FRAC_PI_4,
                }
            }
            "affine7" => match shape {
                Shape::Image { width, height } => {
                    TransformFamily::Affine(AffineImage::new(width, height))
                }
                _ => return Err(Error::invalid("affine7 requires images")),
            },
            "curve14" | "curve13-noamp" => match shape {
                Shape::Curve { len } | Shape::Vector { len } if len >= 2 => {
                    TransformFamily::Curve(CurveWarp::new(len, name == "curve14"))
                }
                _ => return Err(Error::invalid(format!("{name} requires curves of length >= 2"))),
            },
            other => {
                return Err(Error::invalid(format!(
                    "unknown transform family '{other}' (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        };
        Ok(family)
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransformFamily::Identity => "identity",
            TransformFamily::Translation { .. } => "translation",
            TransformFamily::Rotation2D { .. } => "rotation2d",
            TransformFamily::Affine(_) => "affine7",
            TransformFamily::Curve(c) if c.has_amplitude_field() => "curve14",
            TransformFamily::Curve(_) => "curve13-noamp",
        }
    }

    /// Length of `ρ`.
    pub fn dim(&self) -> usize {
        match self {
            TransformFamily::Identity => 0,
            TransformFamily::Translation { dim, .. } => *dim,
            TransformFamily::Rotation2D { .. } => 1,
            TransformFamily::Affine(_) => 7,
            TransformFamily::Curve(c) => c.dim(),
        }
    }

    /// Length of the items the family acts on, when fixed.
    pub fn item_len(&self) -> Option<usize> {
        match self {
            TransformFamily::Identity => None,
            TransformFamily::Translation { dim, .. } => Some(*dim),
            TransformFamily::Rotation2D { .. } => Some(2),
            TransformFamily::Affine(a) => Some(a.width() * a.height()),
            TransformFamily::Curve(c) => Some(c.len()),
        }
    }

    /// Typical magnitude of each parameter.
    pub fn scale_hints(&self) -> Vec<f64> {
        match self {
            TransformFamily::Identity => Vec::new(),
            TransformFamily::Translation { dim, hint } => vec![*hint; *dim],
            TransformFamily::Rotation2D { hint } => vec![*hint],
            TransformFamily::Affine(a) => a.hints().to_vec(),
            TransformFamily::Curve(c) => c.hints().to_vec(),
        }
    }

    /// Rescales the hints of additive (amplitude-unit) parameters to the
    /// spread of the data: `range` is a typical item value range.
    pub fn with_value_range(mut self, range: f64) -> Self {
        if range.is_finite() && range > 0.0 {
            match &mut self {
                TransformFamily::Translation { hint, .. } => *hint = 0.25 * range,
                TransformFamily::Curve(c) => c.set_offset_hint(0.25 * range),
                _ => {}
            }
        }
        self
    }

    /// Weight on the aligned log likelihood. For affine images it is the
    /// number of observed pixels one aligned pixel summarizes when alignment
    /// shrinks the content (`|det M(ρ)| > 1`), so shrinking content towards
    /// a blank frame is not scored as a better fit. Magnifying alignments and
    /// every other family use 1: their aligned samples drop observed content
    /// rather than summarize it, and a weight below 1 would discount the
    /// data term as a whole.
    pub fn data_weight(&self, rho: &[f64]) -> f64 {
        match self {
            TransformFamily::Affine(_) if rho.len() == 7 => {
                ((rho[3] + rho[4]).exp() * (1.0 - rho[5] * rho[6]).abs()).max(1.0)
            }
            _ => 1.0,
        }
    }

    /// Checks `ρ` against the family's dimension and constraints.
    pub fn validate(&self, rho: &[f64]) -> Result<()> {
        if rho.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rho.len(),
            });
        }
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if let TransformFamily::Curve(c) = self {
            c.check_monotone(rho)?;
        }
        Ok(())
    }

    fn check_item(&self, x: &[f64]) -> Result<()> {
        match self.item_len() {
            Some(n) if n != x.len() => Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            }),
            _ => Ok(()),
        }
    }

    /// The forward transformation `τ(·, ρ)`.
    pub fn warp(&self, rho: &[f64]) -> Result<Warp> {
        self.validate(rho)?;
        if rho.iter().all(|&v| v == 0.0) {
            return Ok(Warp::Identity);
        }
        Ok(match self {
            TransformFamily::Identity => Warp::Identity,
            TransformFamily::Translation { .. } => Warp::Translate(rho.to_vec()),
            TransformFamily::Rotation2D { .. } => Warp::Rotate {
                cos: rho[0].cos(),
                sin: rho[0].sin(),
            },
            TransformFamily::Affine(a) => Warp::Affine(a.forward(rho)?),
            TransformFamily::Curve(c) => Warp::Curve(c.forward(rho)),
        })
    }

    /// The inverse transformation `τ(·, ρ)⁻¹`.
    pub fn invert(&self, rho: &[f64]) -> Result<Warp> {
        self.validate(rho)?;
        if rho.iter().all(|&v| v == 0.0) {
            return Ok(Warp::Identity);
        }
        Ok(match self {
            TransformFamily::Identity => Warp::Identity,
            TransformFamily::Translation { .. } => {
                Warp::Translate(rho.iter().map(|v| -v).collect())
            }
            TransformFamily::Rotation2D { .. } => Warp::Rotate {
                cos: rho[0].cos(),
                sin: -rho[0].sin(),
            },
            TransformFamily::Affine(a) => Warp::Affine(a.inverse(rho)?),
            TransformFamily::Curve(c) => Warp::Curve(c.inverse(rho)),
        })
    }

    /// Parameters of the inverse transformation, for families closed under
    /// inversion. Curve warps are not: their inverse is only available as a
    /// [`Warp`] through [`TransformFamily::invert`].
    pub fn invert_params(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.validate(rho)?;
        match self {
            TransformFamily::Identity => Ok(Vec::new()),
            TransformFamily::Translation { .. } | TransformFamily::Rotation2D { .. } => {
                Ok(rho.iter().map(|v| -v).collect())
            }
            TransformFamily::Affine(a) => {
                let inv = a.matrix(rho)?.inverse().ok_or_else(|| {
                    Error::NotInvertible("singular affine matrix".into())
                })?;
                Ok(a.decompose(&inv)?.to_vec())
            }
            TransformFamily::Curve(_) => Err(Error::NotInvertible(
                "curve warps are inverted numerically; use invert()".into(),
            )),
        }
    }

    /// `x = τ(y, ρ)`.
    pub fn apply(&self, y: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
        self.check_item(y)?;
        Ok(self.warp(rho)?.apply(y))
    }

    /// `y = τ(x, ρ⁻¹)`: brings an observation into its cluster's frame.
    pub fn align(&self, x: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
        self.check_item(x)?;
        Ok(self.invert(rho)?.apply(x))
    }

    /// Draws `ρ` with independent `N(0, (magnitude · hint_d)²)` coordinates.
    /// Curve draws are redrawn until the time warp is monotone.
    pub fn random_params<R: Rng + ?Sized>(&self, magnitude: f64, rng: &mut R) -> Vec<f64> {
        let hints = self.scale_hints();
        let mut magnitude = magnitude.max(0.0);
        loop {
            for _ in 0..MAX_DRAW_ATTEMPTS {
                let rho: Vec<f64> = hints
                    .iter()
                    .map(|&h| {
                        let sd = magnitude * h;
                        if sd > 0.0 {
                            Normal::new(0.0, sd).expect("finite std").sample(rng)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if self.validate(&rho).is_ok() {
                    return rho;
                }
            }
            magnitude *= 0.5;
        }
    }
}
