//! Experiment configuration as flat `key=value` text.
//!
//! Lines are `key=value`; blank lines and lines starting with `#` are
//! ignored. Later assignments override earlier ones, so command-line
//! overrides are applied after the file. [`ExperimentConfig::to_text`]
//! writes every key, which is what gets echoed into a run directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{Difficulty, GeneratorConfig};
use crate::decoder::FusionMode;
use crate::error::{ModelError, Result};
use crate::model::{parse_stage_list, Architecture, ModelConfig, Variant};
use crate::text::DEFAULT_MAX_WORDS;
use crate::visual::{DEFAULT_LADDER, STAGES};

/// The only supported projection-width rule: `max(C_V / 2, 8)`.
pub const CM_RULE: &str = "half_min8";
/// The only supported initialization: uniform in `±1/sqrt(fan_in)`.
pub const INIT_RULE: &str = "uniform_fan_in";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub fusion: Option<FusionMode>,
    pub cmam_stages: Option<Vec<usize>>,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub ladder: [usize; STAGES],
    pub c_l: usize,
    pub embed_dim: usize,
    pub max_words: usize,
    pub lr: f64,
    /// Divide the learning rate by 10 every this many epochs of a stage;
    /// 0 disables decay.
    pub lr_decay_every: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    /// Train everything at once for `epochs_joint` epochs instead of the
    /// two-stage schedule.
    pub joint: bool,
    pub epochs_joint: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Freeze each branch's modulation together with its encoder in stage 2.
    pub freeze_cmam: bool,
    /// Stop a stage once test Mean IoU reaches this value (checked after
    /// every epoch when set).
    pub stop_at_test_miou: Option<f64>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub n_train: usize,
    pub n_test: usize,
    pub difficulty: Difficulty,
    pub data_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            fusion: None,
            cmam_stages: None,
            frames: 8,
            height: 64,
            width: 64,
            ladder: DEFAULT_LADDER,
            c_l: 64,
            embed_dim: 32,
            max_words: DEFAULT_MAX_WORDS,
            lr: 5e-4,
            lr_decay_every: 8,
            epochs_stage1: 10,
            epochs_stage2: 5,
            joint: false,
            epochs_joint: 10,
            batch_size: 4,
            seed: 0,
            freeze_cmam: true,
            stop_at_test_miou: None,
            dataset: None,
            checkpoint: None,
            n_train: 200,
            n_test: 50,
            difficulty: Difficulty::Easy,
            data_seed: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| ModelError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ModelError::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

fn optional(value: &str) -> Option<&str> {
    match value {
        "" | "none" | "default" => None,
        v => Some(v),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "variant" => self.variant = value.parse()?,
            "fusion" => self.fusion = optional(value).map(str::parse).transpose()?,
            "cmam_stages" => self.cmam_stages = optional(value).map(parse_stage_list).transpose()?,
            "frames" => self.frames = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "ladder" => {
                let v: Vec<usize> = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?;
                self.ladder = v
                    .try_into()
                    .map_err(|_| ModelError::Config(format!("ladder needs {STAGES} comma-separated widths")))?;
            }
            "c_l" => self.c_l = parse(key, value)?,
            "c_m_rule" if value == CM_RULE => {}
            "init" if value == INIT_RULE => {}
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "max_words" => self.max_words = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_decay_every" => self.lr_decay_every = parse(key, value)?,
            "epochs_stage1" => self.epochs_stage1 = parse(key, value)?,
            "epochs_stage2" => self.epochs_stage2 = parse(key, value)?,
            "joint" => self.joint = parse_bool(key, value)?,
            "epochs_joint" => self.epochs_joint = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "freeze_cmam" => self.freeze_cmam = parse_bool(key, value)?,
            "stop_at_test_miou" => self.stop_at_test_miou = optional(value).map(|v| parse(key, v)).transpose()?,
            "dataset" => self.dataset = optional(value).map(PathBuf::from),
            "checkpoint" => self.checkpoint = optional(value).map(PathBuf::from),
            "n_train" => self.n_train = parse(key, value)?,
            "n_test" => self.n_test = parse(key, value)?,
            "difficulty" => self.difficulty = value.parse()?,
            "data_seed" => self.data_seed = parse(key, value)?,
            k => return Err(ModelError::Config(format!("unknown or unsupported setting {k}={value}"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let path = |p: &Option<PathBuf>| opt(p.as_ref().map(|p| p.display().to_string()));
        let ladder: Vec<String> = self.ladder.iter().map(usize::to_string).collect();
        let lines = [
            ("variant", self.variant.to_string()),
            ("fusion", opt(self.fusion.map(|f| f.to_string()))),
            (
                "cmam_stages",
                opt(self
                    .cmam_stages
                    .as_ref()
                    .map(|s| s.iter().map(usize::to_string).collect::<Vec<_>>().join(","))),
            ),
            ("frames", self.frames.to_string()),
            ("height", self.height.to_string()),
            ("width", self.width.to_string()),
            ("ladder", ladder.join(",")),
            ("c_l", self.c_l.to_string()),
            ("c_m_rule", CM_RULE.into()),
            ("init", INIT_RULE.into()),
            ("embed_dim", self.embed_dim.to_string()),
            ("max_words", self.max_words.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("lr_decay_every", self.lr_decay_every.to_string()),
            ("epochs_stage1", self.epochs_stage1.to_string()),
            ("epochs_stage2", self.epochs_stage2.to_string()),
            ("joint", self.joint.to_string()),
            ("epochs_joint", self.epochs_joint.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("freeze_cmam", self.freeze_cmam.to_string()),
            ("stop_at_test_miou", opt(self.stop_at_test_miou.map(|v| format!("{v:?}")))),
            ("dataset", path(&self.dataset)),
            ("checkpoint", path(&self.checkpoint)),
            ("n_train", self.n_train.to_string()),
            ("n_test", self.n_test.to_string()),
            ("difficulty", self.difficulty.to_string()),
            ("data_seed", self.data_seed.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::from_variant(self.variant, self.fusion, self.cmam_stages.clone())
    }

    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            arch: self.architecture()?,
            ladder: self.ladder,
            c_l: self.c_l,
            embed_dim: self.embed_dim,
            vocab_size,
            frames: self.frames,
            height: self.height,
            width: self.width,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            width: self.width,
            height: self.height,
            frames: self.frames,
        }
    }

    /// Checks everything that does not depend on the dataset.
    pub fn validate(&self) -> Result<()> {
        self.model_config(3)?;
        if self.batch_size == 0 || self.max_words == 0 {
            return Err(ModelError::Config("batch_size and max_words must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ModelError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}
