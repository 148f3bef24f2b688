//! Training loop, evaluation, transfer, checkpoints and metrics.

pub mod config;
pub mod evaluate;
pub mod metrics;
pub mod trainer;

pub use config::{dataset_file, Algorithm, Auxiliaries, RunConfig};
pub use evaluate::{evaluate, evaluate_intention, EvalResult};
pub use metrics::{header as metrics_header, write_csv, MetricsRow};
pub use trainer::{
    load_expert_data, save_cloning, train, transfer_checkpoint, Checkpoint, TrainOutcome, Trainer,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
