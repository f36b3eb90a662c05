//! The global-local attention fusion network.

pub mod attention;
pub mod heatmap;
pub mod inception;
pub mod model;

pub use attention::{fuse_global, fuse_local, global_attention_weights, local_attention_weights, AttentionSubnet, FusionMode};
pub use inception::InceptionBlock;
pub use model::{AttentionRecord, FusionOutput, FusionVariant, GlaModel, ModalityBundle, ModelConfig};
