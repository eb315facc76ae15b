//! Bayesian claims reserving with the dependent gamma model.
//!
//! Several run-off triangles are modelled jointly: incremental claims are
//! gamma distributed with shapes inflated by latent Poisson counts shared
//! across `p` consecutive development years, which induces positive
//! autoregressive-style dependence within each triangle, and hierarchical
//! priors pool information across triangles. Inference is by Gibbs sampling
//! with data augmentation. Reserves come from the posterior predictive
//! distribution of the lower triangles; an over-dispersed Poisson chain-ladder
//! bootstrap is provided as a baseline.

pub mod config;
pub mod dgm;
pub mod error;
pub mod gibbs;
pub mod kernel;
pub mod odp;
pub mod par;
pub mod predict;
pub mod rng;
pub mod select;
pub mod triangle;

pub use config::{GridSpec, HyperPrior, KeyValueConfig, ModelSpec, RunConfig, SimulationSpec};
pub use dgm::{DgmParams, Hyper, MomentReport};
pub use error::{Error, Result};
pub use gibbs::{run_chains, PosteriorSamples};
pub use par::Execution;
pub use triangle::{ColumnSchema, TransformSpec, TrianglePanel};
