//! Optimizer, checkpoints, epoch statistics and the training schedule.

pub mod adam;
pub mod checkpoint;
pub mod stats;
pub mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use stats::{append_jsonl, EpochStats};
pub use trainer::{
    branch_subset, branch_tap_cache, fit, seed_for, train_branches, train_hybrid, StepResult, TrainConfig, TrainedModel, Trainer,
};
