//! Run configuration: one TOML document, validated as a whole, with unknown
//! keys rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::ThresholdPolicy;
use crate::error::{Error, Result};
use crate::model::{DiscriminatorConfig, TrainConfig, ViTConfig};
use crate::scenarios::{ScenarioConfig, SplitSpec};
use crate::signal::WINDOW_LEN;

pub const DEFAULT_SWEEP: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Vit,
    /// Single linear layer over raw samples; a sanity baseline.
    Linear,
}

/// Classifier hyperparameters. The class count comes from the plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub window_len: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mlp_dim: usize,
    pub survival_prob: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ViTConfig::published(1);
        Self {
            kind: ModelKind::Vit,
            window_len: WINDOW_LEN,
            patch_size: p.patch_size,
            embed_dim: p.embed_dim,
            num_layers: p.num_layers,
            num_heads: p.num_heads,
            mlp_dim: p.mlp_dim,
            survival_prob: p.survival_prob,
        }
    }
}

impl ModelSection {
    pub fn vit_config(&self, num_classes: usize) -> ViTConfig {
        ViTConfig {
            patch_size: self.patch_size,
            embed_dim: self.embed_dim,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            mlp_dim: self.mlp_dim,
            survival_prob: self.survival_prob,
            num_classes,
            window_len: self.window_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub thresholds: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            thresholds: DEFAULT_SWEEP.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest, relative to the config file.
    pub manifest: PathBuf,
    /// Where run bundles are created, relative to the config file.
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Independent seeds to train and evaluate; the first one is persisted.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub threshold: ThresholdPolicy,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_replicates() -> usize {
    5
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            output_dir: default_output(),
            seed: 0,
            replicates: default_replicates(),
            model: ModelSection::default(),
            split: SplitSpec::default(),
            scenario: ScenarioConfig::default(),
            threshold: ThresholdPolicy::default(),
            training: TrainConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        // an unreadable config is a usage problem, not a stage failure
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.manifest.is_relative() {
            cfg.manifest = base.join(&cfg.manifest);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Every check that can run before touching data. The class count is
    /// not known yet, so the ViT is checked with a placeholder of 1.
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.model.kind == ModelKind::Vit {
            self.model.vit_config(1).validate().map_err(|e| Error::Config(format!("model: {e}")))?;
        } else if self.model.window_len < 2 {
            return Err(Error::Config("model.window_len must be at least 2".into()));
        }
        self.split.validate()?;
        self.scenario.validate()?;
        self.threshold.validate()?;
        self.training.validate(self.model.window_len).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("training: {m}")),
            other => Error::Config(format!("training: {other}")),
        })?;
        if self.discriminator.enabled && (self.discriminator.epochs == 0 || self.discriminator.batch_size < 2) {
            return Err(Error::Config("discriminator needs epochs >= 1 and batch_size >= 2".into()));
        }
        check_thresholds(&self.sweep.thresholds)
    }
}

/// Sweep thresholds must be finite and strictly increasing.
pub fn check_thresholds(t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(Error::Parameter("at least one sweep threshold is required".into()));
    }
    if t.iter().any(|v| !v.is_finite()) || t.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Parameter(format!("sweep thresholds must be finite and strictly increasing, got {t:?}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_toml("manifest = \"m.toml\"\n").unwrap();
        assert_eq!(cfg.training.epochs, 300);
        assert_eq!(cfg.training.batch_size, 64);
        assert_eq!(cfg.training.lr_max, 1e-4);
        assert_eq!(cfg.model.embed_dim, 256);
        assert_eq!(cfg.split.known_identity_frac, 0.7);
        assert_eq!(cfg.threshold, ThresholdPolicy::Percentile { p: 5.0 });
        assert_eq!(cfg.replicates, 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("manifest = \"m\"\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("manifest = \"m\"\n[training]\nepoch = 3\n").is_err());
        assert!(RunConfig::from_toml("manifest = \"m\"\n[model]\nembed = 3\n").is_err());
    }

    #[test]
    fn whole_config_validated() {
        let bad = "manifest = \"m\"\n[split]\ntrain_frac = 0.5\nval_frac = 0.5\ntest_frac = 0.5\n";
        assert!(matches!(RunConfig::from_toml(bad), Err(Error::Config(_))));
        let bad = "manifest = \"m\"\n[model]\nembed_dim = 30\nnum_heads = 4\n";
        assert!(RunConfig::from_toml(bad).is_err());
        let bad = "manifest = \"m\"\n[sweep]\nthresholds = [0.2, 0.1]\n";
        assert!(RunConfig::from_toml(bad).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::new("m.toml");
        cfg.scenario = ScenarioConfig::noisy(0.1);
        cfg.threshold = ThresholdPolicy::Absolute { phi: 0.05 };
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
