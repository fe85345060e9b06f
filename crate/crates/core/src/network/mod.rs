//! Unrolled shrinkage network that maps encoded coarse patches to sparse
//! codes of a learned residual dictionary.

mod adam;
mod forward;
mod loss;
mod model;
mod params;
mod train;

pub use adam::{adam_step, AdamState};
pub use forward::{forward, forward_batch, predict_batch, predict_residual, shrink, Trace};
pub use loss::{grad, loss, Batch, LossValue, ResidualOperator, CHUNK};
pub use model::{Model, ModelMeta, MODEL_MAGIC};
pub use params::{LossWeights, MultiscaleNet, NetworkParams};
pub use train::{
    fit, split_indices, train_full, train_progressive, write_history, HistoryRow, InsertionRecord,
    TrainConfig, TrainOutput,
};
