//! Behavioural cloning and the single-task and no-schedule ablations.

pub mod bc;
pub mod variant;

pub use bc::{bc_train, BcConfig, BcModel, BcReport, EpochStats, MIN_BC_PAIRS};
pub use variant::{make_variant, Learner, VariantPlan};
