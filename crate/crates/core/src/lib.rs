//! Scheduled multitask adversarial imitation on a deterministic 2-D block world.

pub mod error;
pub mod numeric;
pub mod env;
pub mod data;
pub mod expert;
pub mod record;
pub mod discriminator;
pub mod intention;
pub mod scheduler;
pub mod baselines;
pub mod orchestrator;

pub use error::{Error, Result};

/// Double-precision instantiations used by the training loop.
pub type Intentions = intention::IntentionModel<f64>;
pub type Discriminators = discriminator::DiscriminatorBank<f64>;
