use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attention::AttentionConfig;
use crate::cooccurrence::CoocConfig;
use crate::error::{Error, Result};
use crate::sequence_model::{AdamConfig, InitConfig};
use crate::skeleton::TrackerConfig;

/// Which input streams reach the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    #[default]
    Full,
    /// Joint streams only; the descriptor input is zeroed.
    Baseline1,
    /// Descriptor only; the per-person streams are zeroed.
    Baseline2,
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "baseline1" => Ok(Ablation::Baseline1),
            "baseline2" => Ok(Ablation::Baseline2),
            other => Err(Error::InvalidArgument(format!(
                "unknown ablation {other:?}; expected full, baseline1 or baseline2"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub sub_hidden: usize,
    pub fusion_hidden: usize,
    pub share_sub: bool,
    pub init: InitConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            sub_hidden: 200,
            fusion_hidden: 625,
            share_sub: true,
            init: InitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Coefficient of the squared-weight penalty.
    pub lambda_loss: f64,
    /// Z-score every input dimension with training-set statistics.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lambda_loss: 0.5e-3,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Frames per segment.
    pub segment_length: usize,
    /// Segments per sample.
    pub segments: usize,
    /// Tracked entities fed to the model.
    pub persons: usize,
    /// Patch side length in pixels.
    pub patch_size: u32,
    /// Appearance vector length.
    pub embedding_dim: usize,
    /// Query patches on every frame of a segment instead of its middle frame.
    pub per_frame_patches: bool,
    /// Longest joint dropout (in frames) that gets interpolated.
    pub max_gap: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub tracker: TrackerConfig,
    pub attention: AttentionConfig,
    pub cooccurrence: CoocConfig,
    pub model: ModelConfig,
    pub optimizer: AdamConfig,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            segment_length: 20,
            segments: 20,
            persons: 2,
            patch_size: 32,
            embedding_dim: 64,
            per_frame_patches: false,
            max_gap: 10,
            seed: 0,
            ablation: Ablation::Full,
            tracker: TrackerConfig::default(),
            attention: AttentionConfig::default(),
            cooccurrence: CoocConfig::default(),
            model: ModelConfig::default(),
            optimizer: AdamConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Settings that change the features a record produces.
#[derive(Serialize)]
struct FeatureSettings<'a> {
    segment_length: usize,
    segments: usize,
    persons: usize,
    patch_size: u32,
    embedding_dim: usize,
    per_frame_patches: bool,
    max_gap: usize,
    tracker: &'a TrackerConfig,
    attention: &'a AttentionConfig,
    cooccurrence: &'a CoocConfig,
}

impl PipelineConfig {
    /// Small profile that trains in well under a minute.
    pub fn desk() -> Self {
        PipelineConfig {
            segment_length: 5,
            segments: 10,
            embedding_dim: 16,
            cooccurrence: CoocConfig {
                k: 8,
                ..CoocConfig::default()
            },
            model: ModelConfig {
                sub_hidden: 16,
                fusion_hidden: 32,
                ..ModelConfig::default()
            },
            optimizer: AdamConfig {
                lr: 5e-3,
                ..AdamConfig::default()
            },
            train: TrainConfig {
                epochs: 40,
                batch_size: 32,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("config cannot be written as TOML: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("segment_length", self.segment_length),
            ("segments", self.segments),
            ("persons", self.persons),
            ("embedding_dim", self.embedding_dim),
            ("max_gap", self.max_gap),
            ("model.sub_hidden", self.model.sub_hidden),
            ("model.fusion_hidden", self.model.fusion_hidden),
            ("train.batch_size", self.train.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.patch_size < 2 || !self.patch_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "patch_size must be even and at least 2, got {}",
                self.patch_size
            )));
        }
        if !(self.train.lambda_loss >= 0.0) || !self.train.lambda_loss.is_finite() {
            return Err(Error::InvalidArgument("train.lambda_loss must be finite and nonnegative".into()));
        }
        if !(self.tracker.iou_threshold > 0.0 && self.tracker.iou_threshold <= 1.0) {
            return Err(Error::InvalidArgument("tracker.iou_threshold must lie in (0, 1]".into()));
        }
        if !(self.model.init.scale >= 0.0) || !self.model.init.scale.is_finite() {
            return Err(Error::InvalidArgument("model.init.scale must be finite and nonnegative".into()));
        }
        self.attention.validate()?;
        self.cooccurrence.validate()?;
        self.optimizer.validate()?;
        Ok(())
    }

    /// Hex SHA-256 over the feature-affecting settings.
    pub fn feature_hash(&self) -> String {
        let settings = FeatureSettings {
            segment_length: self.segment_length,
            segments: self.segments,
            persons: self.persons,
            patch_size: self.patch_size,
            embedding_dim: self.embedding_dim,
            per_frame_patches: self.per_frame_patches,
            max_gap: self.max_gap,
            tracker: &self.tracker,
            attention: &self.attention,
            cooccurrence: &self.cooccurrence,
        };
        hex_sha256(serde_json::to_string(&settings).expect("settings serialize").as_bytes())
    }

    /// Hex SHA-256 over the whole configuration.
    pub fn config_hash(&self) -> String {
        hex_sha256(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Per-person feature length.
    pub fn person_dim(&self) -> usize {
        self.embedding_dim + 5 + 4 + 10 + 10
    }

    pub fn descriptor_dim(&self) -> usize {
        self.cooccurrence.k * self.cooccurrence.k
    }
}

pub(crate) fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
