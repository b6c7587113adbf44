//! Run configuration loaded from TOML.
//!
//! ```toml
//! dataset = "data/steady"   # dataset directory (required)
//! out_dir = "runs/steady"   # output directory (required)
//! seed = 0                  # drives initialization, training order and sampling
//!
//! [model]                   # denoiser; defaults: length 2048, base 32, [1,2,4,8],
//! length = 2048             # time_embed_dim 128, 4 heads, inner 128, depth 2,
//!                           # condition_enabled true, norm_groups 8
//! [train]                   # defaults: 200 epochs, batch 16, lr 1e-4,
//! epochs = 200              # weight decay 0.1, huber loss
//! [train.schedule]          # defaults: linear, 1000 steps, beta 1e-4..0.02
//! kind = "linear"
//! [metrics]                 # defaults: PSNR of identical signals capped at 100 dB
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::DenoiserConfig;
use crate::diffusion::{LossKind, TrainConfig};
use crate::error::Result;
use crate::metrics::MetricConfig;
use crate::schedule::ScheduleConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub loss_kind: LossKind,
    pub schedule: ScheduleConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            weight_decay: d.weight_decay,
            loss_kind: d.loss_kind,
            schedule: d.schedule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: DenoiserConfig,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub metrics: MetricConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.model.validate()?;
        cfg.train_config().validate()?;
        Ok(cfg)
    }

    /// Loads a config; relative `dataset` and `out_dir` paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            loss_kind: t.loss_kind,
            schedule: t.schedule.clone(),
            seed: self.seed,
            condition_enabled: self.model.condition_enabled,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| crate::Error::Config(e.to_string()))
    }
}
