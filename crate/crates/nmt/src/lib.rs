//! Small Transformer translation model with the conditioning hooks of
//! `polagree::conditioning`.

pub mod bpe;
pub mod checkpoint;
pub mod decode;
pub mod evaluate;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod scalar;
pub mod train;

pub use bpe::Bpe;
pub use checkpoint::Checkpoint;
pub use decode::{Hypothesis, Translator};
pub use model::{Model, ModelConfig, Sample};
pub use scalar::Scalar;
pub use train::{finetune, pretrain, Adam, LogRow, TrainConfig};

pub type ModelF32 = Model<f32>;
pub type ModelF64 = Model<f64>;
