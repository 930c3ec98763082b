//! Model-based clustering of mixed continuous, count and ordinal data with
//! mixtures of Gaussian copulas, fitted by a Metropolis-within-Gibbs sampler.
//!
//! Each component couples one-dimensional margins (Gaussian, Poisson,
//! ordered multinomial) through a latent centred Gaussian vector with a
//! per-component correlation matrix. The crate covers ingestion
//! ([`schema`]), densities ([`model`]), inference ([`sampler`]), model
//! choice ([`selection`]), per-component PCA maps ([`viz`]) and simulation
//! studies ([`eval`]).

pub mod error;
pub mod eval;
pub mod gauss;
pub mod identifiability;
pub mod margins;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod schema;
pub mod selection;
pub mod special;
pub mod viz;

pub use error::{Error, Result};
pub use gauss::{BoxBounds, CorrelationMatrix};
pub use identifiability::{check_identifiability, IdentifiabilityCheck, Verdict};
pub use margins::{MarginParams, MarginPrior};
pub use model::{ComponentParams, Family, MixtureParams};
pub use sampler::{fit, ChainConfig, FitResult};
pub use schema::{load_dataset, summarize, Column, MixedDataset, Schema, VariableKind};
pub use selection::{param_count, sweep, CriterionReport};
