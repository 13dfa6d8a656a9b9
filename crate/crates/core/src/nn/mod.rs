//! Graph attention + recurrent classifier and its training machinery.

pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod tape;

pub use checkpoint::Checkpoint;
pub use model::{
    bce_with_logits, dropout_mask, forward_prepared, gat_forward, gru_step, loss_and_grads, model_forward, parameter_count, sigmoid, trace,
    GatHead, GatLayerParams, GatOutput, GruCellParams, GruLayerParams, MlpParams, Mode, ModelConfig, ModelParams, PreparedFrame,
    PreparedSequence, Probes, Temporal, Trace,
};
pub use optim::{cosine_lr, AdamWConfig, OptimizerState};
pub use tape::{Gradients, NodeId, ParamStore, Tape};
