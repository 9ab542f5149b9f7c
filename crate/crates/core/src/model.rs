//! Hyperparameters and the priors they resolve to for a concrete dataset.

use crate::error::{Error, Result};
use crate::expfam::{BetaPrior, ComponentStats, DataPrior, NigPrior, TransformPriorStats};
use crate::item::Shape;
use crate::transforms::TransformFamily;

/// Which data distribution `F_D` a dataset uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataModel {
    /// Product of per-pixel Bernoullis (images, soft pixels allowed).
    Bernoulli,
    /// Diagonal Gaussian (curves, points, generic vectors).
    Gaussian,
}

impl DataModel {
    pub fn for_shape(shape: Shape) -> Self {
        match shape {
            Shape::Image { .. } => DataModel::Bernoulli,
            _ => DataModel::Gaussian,
        }
    }
}

/// User-facing hyperparameters. Scales marked relative are multiplied by a
/// data- or family-derived quantity in [`Priors::resolve`].
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    /// Beta prior on each pixel.
    pub beta_a: f64,
    pub beta_b: f64,
    /// Pseudo-observations of the dataset's mean image added to every
    /// pixel's Beta prior; 0 leaves the shared `Beta(beta_a, beta_b)`.
    pub beta_strength: f64,
    /// Normal–Inverse-Gamma prior per dimension.
    pub mu0: f64,
    pub kappa0: f64,
    pub a0: f64,
    /// Relative to the mean per-dimension data variance.
    pub b0: f64,
    /// Inverse-Gamma shape of every transform variance.
    pub transform_a: f64,
    /// Prior mode of each transform variance, as a fraction of the squared
    /// scale hint of that dimension.
    pub transform_var_fraction: f64,
    /// Gamma(shape, rate) hyperprior on the concentration.
    pub gamma_a: f64,
    pub gamma_b: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            beta_a: 0.05,
            beta_b: 0.05,
            beta_strength: 30.0,
            mu0: 0.0,
            kappa0: 0.01,
            a0: 1.0,
            b0: 0.1,
            transform_a: 2.0,
            transform_var_fraction: 0.2,
            gamma_a: 1.0,
            gamma_b: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta_a", self.beta_a),
            ("beta_b", self.beta_b),
            ("kappa0", self.kappa0),
            ("a0", self.a0),
            ("b0", self.b0),
            ("transform_a", self.transform_a),
            ("transform_var_fraction", self.transform_var_fraction),
            ("gamma_a", self.gamma_a),
            ("gamma_b", self.gamma_b),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.beta_strength.is_finite() && self.beta_strength >= 0.0) {
            return Err(Error::invalid(format!(
                "beta_strength must be non-negative, got {}",
                self.beta_strength
            )));
        }
        if !self.mu0.is_finite() {
            return Err(Error::invalid("mu0 must be finite"));
        }
        Ok(())
    }
}

/// Mean over dimensions of the per-dimension sample variance. Falls back to
/// 1 when undefined or degenerate.
pub fn mean_dim_variance(items: &[Vec<f64>]) -> f64 {
    let n = items.len();
    if n < 2 {
        return 1.0;
    }
    let dim = items[0].len();
    if dim == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for d in 0..dim {
        let mean = items.iter().map(|x| x[d]).sum::<f64>() / n as f64;
        total += items.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    }
    let v = total / dim as f64;
    if v.is_finite() && v > 1e-12 {
        v
    } else {
        1.0
    }
}

fn mean_item(items: &[Vec<f64>], dim: usize) -> Result<Vec<f64>> {
    let mut mean = vec![0.0; dim];
    for x in items {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v.clamp(0.0, 1.0);
        }
    }
    let n = items.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Priors resolved against a dataset and a transformation family.
#[derive(Clone, Debug, PartialEq)]
pub struct Priors {
    pub data: DataPrior,
    pub transform_a: f64,
    pub transform_b: Vec<f64>,
}

impl Priors {
    pub fn resolve(
        hyper: &Hyperparams,
        model: DataModel,
        items: &[Vec<f64>],
        dim: usize,
        family: &TransformFamily,
    ) -> Result<Self> {
        hyper.validate()?;
        let data = match model {
            DataModel::Bernoulli if hyper.beta_strength > 0.0 && !items.is_empty() => {
                let mean = mean_item(items, dim)?;
                DataPrior::Bernoulli(BetaPrior::centred(
                    &mean,
                    hyper.beta_strength,
                    hyper.beta_a,
                    hyper.beta_b,
                ))
            }
            DataModel::Bernoulli => {
                DataPrior::Bernoulli(BetaPrior::shared(dim, hyper.beta_a, hyper.beta_b))
            }
            DataModel::Gaussian => {
                let var = mean_dim_variance(items);
                DataPrior::Gaussian(NigPrior::isotropic(
                    dim,
                    hyper.mu0,
                    hyper.kappa0,
                    hyper.a0,
                    hyper.b0 * var,
                ))
            }
        };
        // Variance mode b / (a + 1) pinned at fraction * hint².
        let transform_b = family
            .scale_hints()
            .iter()
            .map(|h| (hyper.transform_a + 1.0) * hyper.transform_var_fraction * h * h)
            .collect();
        Ok(Self {
            data,
            transform_a: hyper.transform_a,
            transform_b,
        })
    }

    pub fn empty_transform_stats(&self) -> TransformPriorStats {
        TransformPriorStats::new(self.transform_a, self.transform_b.clone())
    }

    pub fn empty_component(&self) -> ComponentStats {
        ComponentStats::new(self.data.empty_stats(), self.empty_transform_stats())
    }

    pub fn data_dim(&self) -> usize {
        self.data.dim()
    }

    pub fn transform_dim(&self) -> usize {
        self.transform_b.len()
    }
}
