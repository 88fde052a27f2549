//! Monte Carlo maximum likelihood for exponential-family Markov random fields
//! with elastic-net regularization, decorrelated score inference and
//! false-discovery-rate controlled selection.

pub mod cli;
pub mod error;
pub mod fdr;
pub mod harness;
pub mod inference;
pub mod likelihood;
pub mod model;
pub mod oracle;
pub(crate) mod prox;
pub mod rng;
pub mod sampler;
pub mod solver;

pub use error::{Error, Result};
pub use likelihood::{McLikelihood, ReferenceSet};
pub use model::{BuiltinFeature, FeatureMap, StateSpace};
pub use rng::RngSeed;
pub use sampler::{ObservedSample, ReferenceChain};
pub use solver::{FitResult, PenaltyConfig};
