//! Fully connected network stack: stages of batchnorm, affine and ReLU with
//! inverted dropout, followed by a softmax or linear head. Gradients are
//! derived by hand for this fixed cascade and parameters are fitted with Adam.

mod adam;
mod forward;
mod loss;
mod model;
mod train;

pub use adam::{adam_step, Adam, AdamConfig};
pub use forward::{ForwardCache, ForwardPass, Gradients, Mode, StageGrads};
pub use loss::{loss, loss_and_grad, softmax_rows, LossKind, Targets};
pub use model::{Head, ModelCheckpoint, NetSpec, StageParams, TrainMeta};
pub use train::{
    train, train_on_split, train_on_split_observed, DataSplit, EpochStats, TrainConfig, TrainError,
    TrainOutcome,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite activation at {0} (training diverged?)")]
    NonFinite(String),
    #[error("stale or mismatched forward cache: {0}")]
    StaleCache(String),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
}
