//! Loss assembly and the staged training loop.

mod batch;
mod config;
mod losses;
mod run;

pub use batch::{batch_objective, plan_batch, AmclTerm, BatchPlan, FdclTerm, SampleTargets};
pub use config::{AugmentConfig, TrainConfig};
pub use losses::{
    attr_loss, attr_loss_grad, best_mode, task_loss, task_loss_with_grads, total_loss, AttributeScaler, LossBreakdown,
    TaskGrads, TaskLoss,
};
pub use run::{run_training, training_policies, write_log, EpochRecord, LabelRound, TrainMeta, TrainOutcome, TrainedModel, LOG_HEADER};

use crate::contrastive::ContrastiveError;
use crate::model::ModelError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Contrastive(#[from] ContrastiveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
}
