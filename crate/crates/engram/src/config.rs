//! Run configuration: one TOML file describes one experiment — model kind
//! and sizes, task spec, optimizer, loop lengths, seed, output directory.
//!
//! A config may carry a `[desk_scale]` overlay with downsized values for the
//! fields that dominate runtime; [`RunConfig::effective`] resolves it. The
//! run hash covers the resolved config, so a desk-scaled run and its
//! full-scale parent never share artifacts.

use crate::optim::OptimKind;
use crate::tasks::TaskSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ntm,
    Dnc,
    UwDnc,
    CuwDnc,
    DcwMann,
    SingleController,
    Dmnc,
    ViewConcat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    Late,
    Early,
}

fn one() -> usize {
    1
}

fn default_embedding() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_size: usize,
    pub slots: usize,
    pub word: usize,
    #[serde(default = "one")]
    pub read_heads: usize,
    #[serde(default = "one")]
    pub write_heads: usize,
    /// Token-embedding width for the vocabulary models.
    #[serde(default = "default_embedding")]
    pub embedding: usize,
    /// Writes per sequence for the scheduled-writing models.
    #[serde(default)]
    pub write_budget: Option<usize>,
    #[serde(default)]
    pub cache_size: Option<usize>,
    #[serde(default)]
    pub fusion: Option<FusionKind>,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_clip() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimKind,
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Global-norm ceiling; 0 disables clipping.
    #[serde(default = "default_clip")]
    pub clip: f64,
}

/// Optional downsized overrides; anything absent keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeskScale {
    #[serde(default)]
    pub iterations: Option<u64>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub eval_samples: Option<usize>,
    #[serde(default)]
    pub hidden_size: Option<usize>,
    #[serde(default)]
    pub slots: Option<usize>,
    #[serde(default)]
    pub len_range: Option<(usize, usize)>,
}

fn default_eval_interval() -> u64 {
    500
}

fn default_eval_samples() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: u64,
    pub batch_size: usize,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    pub out_dir: String,
    /// Metric column names; empty picks task-appropriate defaults.
    #[serde(default)]
    pub metrics: Vec<String>,
    /// Record real wall-clock times. Off by default so identical runs
    /// produce byte-identical logs.
    #[serde(default)]
    pub wall_clock: bool,
    #[serde(default)]
    pub early_stop_bit_accuracy: Option<f64>,
    pub model: ModelConfig,
    pub task: TaskSpec,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub desk_scale: Option<DeskScale>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config file {path}")]
    Parse { path: String, source: Box<toml::de::Error> },
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// The config with any desk-scale overlay folded in and removed.
    pub fn effective(&self) -> RunConfig {
        let mut cfg = self.clone();
        if let Some(ds) = cfg.desk_scale.take() {
            if let Some(v) = ds.iterations {
                cfg.iterations = v;
            }
            if let Some(v) = ds.batch_size {
                cfg.batch_size = v;
            }
            if let Some(v) = ds.eval_samples {
                cfg.eval_samples = v;
            }
            if let Some(v) = ds.hidden_size {
                cfg.model.hidden_size = v;
            }
            if let Some(v) = ds.slots {
                cfg.model.slots = v;
            }
            if let Some(v) = ds.len_range {
                cfg.task.len_range = v;
            }
        }
        cfg
    }

    /// FNV-1a hash of the resolved config's canonical TOML, as 16 hex chars.
    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.effective().to_toml().as_bytes()))
    }
}

pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    RunConfig::from_toml(&text)
        .map_err(|e| ConfigError::Parse { path: path.display().to_string(), source: Box::new(e) })
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
