//! From-scratch ordinal-regression network.
//!
//! Layers carry hand-derived backward passes; there is no autograd graph.
//! The network regresses the grade as a real number and is trained with
//! mean squared error. Layers can be frozen: their parameters never change
//! but gradients still pass through them to earlier layers.

mod checkpoint;
mod layers;
mod loss;
mod network;
mod optim;
mod scalar;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Architecture, CheckpointHeader, ParamEntry};
pub use layers::{Conv2d, Dense, Layer, LayerKind, LayerSpec, ParamGrad};
pub use loss::mse_loss;
pub use network::{
    build_reference_model, build_reference_model_with, Gradients, Mode, Network, DEFAULT_DROPOUT, DROPOUT_STREAM_SALT,
    MIN_REFERENCE_SIDE, REFERENCE_BACKBONE_LAYERS,
};
pub use optim::{Optimizer, OptimizerKind};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{predict_examples, train, train_with_progress, EpochRecord, Example, TrainConfig, TrainLog};

#[derive(Debug, thiserror::Error)]
pub enum NnetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("backward called without a preceding forward pass")]
    BackwardWithoutForward,
    #[error("empty batch")]
    EmptyBatch,
    #[error("no training data")]
    NoData,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
