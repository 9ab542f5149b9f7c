//! Joint alignment and clustering of datasets with a transformed
//! Dirichlet-process mixture.
//!
//! Every observation is modelled as a transformed draw from a latent cluster:
//! `x_i = τ(y_i, ρ_i)` with `y_i ~ F_D(θ_{z_i})` and `ρ_i ~ F_T(φ_{z_i})`.
//! Inference recovers the assignments `z`, the per-item transforms `ρ` and the
//! number of clusters. Component parameters are always integrated out through
//! cached conjugate sufficient statistics ([`expfam`]).
//!
//! Module map:
//!
//! - [`expfam`]: conjugate component statistics and their densities.
//! - [`transforms`]: black-box transformation families.
//! - [`ba`]: single-cluster Bayesian alignment.
//! - [`jac`]: the full alignment-and-clustering samplers.
//! - [`distributed`]: snapshot map/reduce iteration.
//! - [`metrics`]: evaluation scores.
//! - [`data`]: dataset I/O, synthetic generators and checkpoints.
//! - [`cli`]: the `tdpmix` command-line front end.

pub mod ba;
pub mod cli;
pub mod data;
pub mod distributed;
pub mod error;
pub mod expfam;
pub mod item;
pub mod jac;
pub mod metrics;
pub mod model;
pub mod optimize;
pub mod transforms;

pub use error::{Error, Result};
pub use item::{DataItem, Shape};
pub use model::Hyperparams;
pub use transforms::TransformFamily;
