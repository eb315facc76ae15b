//! Gibbs sampler for the dependent gamma model with latent-count augmentation.

pub mod conditionals;
pub mod samples;
pub mod sampler;

pub use conditionals::{
    augmented_loglik, cond_alpha, cond_beta, cond_gamma, cond_hyper_rate, cond_hyper_shape,
    cond_z, deviance, HyperGroup, ModelData,
};
pub use samples::{identifiable_summary, ChainSamples, Draw, PosteriorSamples};
pub use sampler::{gibbs_sweep, initial_params, run_chains, GibbsState};
