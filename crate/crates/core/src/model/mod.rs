//! Model components and the full anticipation network.

mod anticipation;
mod checkpoint;
mod config;
pub mod layers;
mod params;

pub use anticipation::{argmax_lowest, caption_loss, AnticipationModel, ForwardTrace, ModelBatch};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, CheckpointHeader, CHECKPOINT_SCHEMA_VERSION};
pub use config::{ArchConfig, Modality, ModelConfig};
pub use params::{Embedding, Init, LayerNorm, Linear, ParamStore};
