//! Losses, optimizers and the meta-learning loops.

mod adam;
mod adapt;
mod loss;
pub mod taylor;
mod train;
mod update;

pub use adam::{AdamConfig, AdamState};
pub use adapt::{adam_descent, few_shot_adapt, inner_adapt, sample_indices, Adapted, InnerLoop};
pub use loss::{
    combine, data_loss, physics_loss, total_loss, LossTerms, LossValues, LossWeights, Objective,
};
pub use train::{
    joint_train, meta_train, split_validation, validation_loss, LogRecord, MetaConfig,
    TrainOutcome, TrainingLog,
};
pub use update::meta_update;
