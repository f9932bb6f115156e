use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the 1-D vision transformer classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViTConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mlp_dim: usize,
    pub survival_prob: f64,
    pub num_classes: usize,
    pub window_len: usize,
}

impl ViTConfig {
    /// Published architecture: patch 20, width 256, six layers of eight
    /// heads, MLP width 128, survival probability 0.8, 2000-sample windows.
    pub fn published(num_classes: usize) -> Self {
        Self {
            patch_size: 20,
            embed_dim: 256,
            num_layers: 6,
            num_heads: 8,
            mlp_dim: 128,
            survival_prob: 0.8,
            num_classes,
            window_len: 2000,
        }
    }

    pub fn num_patches(&self) -> usize {
        self.window_len / self.patch_size
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("patch_size", self.patch_size),
            ("embed_dim", self.embed_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("mlp_dim", self.mlp_dim),
            ("num_classes", self.num_classes),
            ("window_len", self.window_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model {name} must be positive")));
        }
        if self.window_len % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "window_len {} is not a multiple of patch_size {}",
                self.window_len, self.patch_size
            )));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !(self.survival_prob > 0.0 && self.survival_prob <= 1.0) {
            return Err(Error::Config(format!(
                "survival_prob must be in (0, 1], got {}",
                self.survival_prob
            )));
        }
        Ok(())
    }
}
