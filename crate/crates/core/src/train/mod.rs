//! Three-stage training: progressive SE, pitch estimator, harmonic compensation.

pub mod checkpoint;
pub mod data;
pub mod schedule;
pub mod stage;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use data::{make_batch, sample_batch, Batch, TrainItem, TrainSet};
pub use schedule::{lr_at_step, LrSchedule};
pub use stage::{trainable_mask, Stage, StageConfig};
pub use trainer::{StepRecord, TrainConfig, TrainState, Trainer};
