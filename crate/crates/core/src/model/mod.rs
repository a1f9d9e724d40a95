//! The recommender: parameters, ablation switches, the batched forward pass
//! and checkpoints.

mod ablation;
mod checkpoint;
mod forward;
mod params;

pub use ablation::AblationConfig;
pub use checkpoint::{content_hash, Checkpoint, StoredTensor};
pub use forward::{
    attention_weights, forward_batch, item_latent_factor, item_space_user_factor, opinion_aware_item_repr,
    opinion_aware_user_repr, predict_rating, social_space_user_factor, user_latent_factor, BatchForward, Mode,
};
pub use params::{AttentionNet, Dense, EmbeddingTables, GraphRecParams, Mlp, ModelShape, INIT_STD};
