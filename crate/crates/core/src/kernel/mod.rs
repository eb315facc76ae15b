//! Sampling primitives shared by the Gibbs sampler and the predictive code.

pub mod discrete;
pub mod slice;
pub mod special;
pub mod summary;
pub mod variates;

pub use discrete::{discrete_sample, enumerate_pmf, DiscreteConfig};
pub use slice::{slice_sample, SliceConfig};
pub use summary::{hpd_interval, psrf, quantile_sorted, ChainSummary, ParamSummary};
