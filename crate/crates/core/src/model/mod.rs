//! Baseline and adaptive attention models: parameters, loss, training and checkpoints.

mod checkpoint;
mod config;
mod network;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{parse_kv, parse_value, Mode, ModelConfig};
pub use network::{Model, ParamLayout, SourceContext, StepNodes, StepOptions, StepTrace};
pub use optim::{AdaDelta, DEFAULT_EPS, DEFAULT_RHO};
pub use train::{
    batch_gradient, dev_bleu, sentence_gradient, train, DevSet, EpochLog, TrainConfig, TrainOutcome, TrainState,
};
