use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cepstra::{FeatureKind, PipelineConfig};
use crate::data::{SplitMode, Task};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Arch, Monitor, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Mfcc,
    Gfcc,
    Both,
}

impl Representation {
    pub fn kinds(self) -> Vec<FeatureKind> {
        match self {
            Representation::Mfcc => vec![FeatureKind::Mfcc],
            Representation::Gfcc => vec![FeatureKind::Gfcc],
            Representation::Both => FeatureKind::ALL.to_vec(),
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Mfcc => "mfcc",
            Representation::Gfcc => "gfcc",
            Representation::Both => "both",
        })
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mfcc" => Ok(Representation::Mfcc),
            "gfcc" => Ok(Representation::Gfcc),
            "both" => Ok(Representation::Both),
            other => Err(Error::InvalidInput(format!(
                "unknown representation `{other}` (expected mfcc, gfcc or both)"
            ))),
        }
    }
}

/// Everything that determines a grid run. Read from a flat TOML document
/// whose keys are the field names; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub task: Task,
    pub representation: Representation,
    pub architectures: Vec<Arch>,

    pub pre_emphasis: f64,
    pub frame_len_s: f64,
    pub hop_s: f64,
    pub fft_size: Option<usize>,
    pub mel_filters: usize,
    pub gammatone_filters: usize,
    pub fmin: f64,
    pub fmax: Option<f64>,
    pub log_floor: f64,
    pub delta_window: usize,

    /// Share of every (emotion, intensity) stratum used for training.
    pub split_ratio: f64,
    pub split_seed: u64,
    pub split_mode: SplitMode,

    /// Base seed from which every experiment derives its own.
    pub seed: u64,
    pub batch_size: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Share of the training set held out to drive early stopping; 0 means
    /// training accuracy is monitored.
    pub monitor_holdout: f64,

    pub out_dir: PathBuf,
    /// Feature cache location; defaults to `<out_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    /// Experiments run concurrently; 0 uses every core.
    pub workers: usize,
    /// Write a checkpoint per trained model under `<out_dir>/models`.
    pub save_models: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        let train = TrainConfig::default();
        Self {
            manifest: PathBuf::from("manifest.csv"),
            task: Task::Emotion,
            representation: Representation::Both,
            architectures: Arch::default_grid(),
            pre_emphasis: pipeline.pre_emphasis,
            frame_len_s: pipeline.frame_len_s,
            hop_s: pipeline.hop_s,
            fft_size: pipeline.fft_size,
            mel_filters: pipeline.mel_filters,
            gammatone_filters: pipeline.gammatone_filters,
            fmin: pipeline.fmin,
            fmax: pipeline.fmax,
            log_floor: pipeline.log_floor,
            delta_window: pipeline.delta_window,
            split_ratio: 0.75,
            split_seed: 42,
            split_mode: SplitMode::Stratified,
            seed: 42,
            batch_size: train.batch_size,
            patience: train.patience,
            min_delta: train.min_delta,
            max_epochs: train.max_epochs,
            learning_rate: train.adam.lr,
            monitor_holdout: 0.0,
            out_dir: PathBuf::from("results"),
            cache_dir: None,
            workers: 1,
            save_models: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `manifest` is resolved against the
    /// file's directory.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if cfg.manifest.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.manifest = dir.join(&cfg.manifest);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.architectures.is_empty() {
            return Err(Error::Config("no architectures configured".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        if !(0.0..1.0).contains(&self.monitor_holdout) {
            return Err(Error::Config(format!(
                "monitor_holdout must lie in [0, 1), got {}",
                self.monitor_holdout
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size, max_epochs and patience must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            pre_emphasis: self.pre_emphasis,
            frame_len_s: self.frame_len_s,
            hop_s: self.hop_s,
            fft_size: self.fft_size,
            mel_filters: self.mel_filters,
            gammatone_filters: self.gammatone_filters,
            fmin: self.fmin,
            fmax: self.fmax,
            log_floor: self.log_floor,
            delta_window: self.delta_window,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            patience: self.patience,
            min_delta: self.min_delta,
            max_epochs: self.max_epochs,
            adam: AdamConfig {
                lr: self.learning_rate,
                ..AdamConfig::default()
            },
            monitor: if self.monitor_holdout > 0.0 {
                Monitor::HeldOut {
                    fraction: self.monitor_holdout,
                }
            } else {
                Monitor::TrainAccuracy
            },
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }
}

/// Seed of one grid cell: the first eight bytes of
/// `sha256("{base}|{model}|{representation}|{task}")`, little-endian. Each
/// cell's seed is independent of which other cells exist.
pub fn experiment_seed(base: u64, arch: &Arch, kind: FeatureKind, task: Task) -> u64 {
    let digest = Sha256::digest(format!("{base}|{arch}|{kind}|{task}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
