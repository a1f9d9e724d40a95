use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graphdata::{hex, DEFAULT_NEIGHBOR_CAP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub mlp_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// `None` disables neighbor truncation.
    pub neighbor_cap: Option<usize>,
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            mlp_layers: 3,
            learning_rate: 0.001,
            batch_size: 128,
            dropout: 0.5,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            neighbor_cap: Some(DEFAULT_NEIGHBOR_CAP),
            eval_batch_size: 1024,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return bad(format!("rmsprop_decay must lie in [0, 1), got {}", self.rmsprop_decay));
        }
        if !(self.rmsprop_epsilon > 0.0) {
            return bad(format!("rmsprop_epsilon must be > 0, got {}", self.rmsprop_epsilon));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.embed_dim == 0 || self.mlp_layers == 0 {
            return bad("embed_dim and mlp_layers must be at least 1".into());
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 || self.max_epochs == 0 {
            return bad("batch sizes and max_epochs must be at least 1".into());
        }
        if self.neighbor_cap == Some(0) {
            return bad("neighbor_cap must be at least 1 (omit it to disable truncation)".into());
        }
        Ok(())
    }

    /// Short stable digest of every field.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}
