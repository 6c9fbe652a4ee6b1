//! Optimization: AdamW, the step schedule, checkpoints and the training loop.

mod adamw;
mod checkpoint;
mod config;
mod log;
mod train;

pub use adamw::{AdamW, OptimizerState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use log::{LossLog, LOG_HEADER};
pub use train::{Batch, Trainer};
