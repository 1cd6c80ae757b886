//! Training schedules, evaluation and run-directory persistence.
//!
//! The default schedule has two stages. Stage 1 trains one single-branch
//! model (text encoder, visual encoder, optional modulation and its own
//! decoder) per active branch. Stage 2 copies the branch encoders into the
//! joint model, freezes them and trains its freshly initialized decoder.
//! Joint mode trains the whole model in one stage instead.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use actorseg_tensor::{seeded, Adam, AdamConfig, Tensor};
use rand::seq::SliceRandom;

use crate::config::ExperimentConfig;
use crate::data::{self, Manifest, Split, VideoSample};
use crate::error::{ModelError, Result};
use crate::metrics::{aggregate_scores, score, BinaryMask, EvalReport};
use crate::model::{BranchOutput, Model, ModelConfig};
use crate::text::{tokenize, Query, Vocabulary};
use crate::visual::FeatureKind;

/// A sample converted to model inputs.
#[derive(Clone, Debug)]
pub struct EncodedSample {
    pub id: String,
    pub clip: Tensor,
    pub query: Query,
    pub target: Tensor,
    pub mask: BinaryMask,
}

impl EncodedSample {
    pub fn new(id: impl Into<String>, sample: &VideoSample, vocab: &Vocabulary, max_words: usize) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            clip: sample.clip_tensor(),
            query: tokenize(&sample.query, vocab, max_words)?,
            target: sample.mask_tensor(),
            mask: sample.mask.clone(),
        })
    }

    /// `(frames, height, width)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.clip.shape();
        (s[0], s[1], s[2])
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub train: Vec<EncodedSample>,
    pub test: Vec<EncodedSample>,
}

impl Dataset {
    pub fn from_samples(vocab: Vocabulary, train: &[VideoSample], test: &[VideoSample], max_words: usize) -> Result<Self> {
        let enc = |split: Split, samples: &[VideoSample]| -> Result<Vec<EncodedSample>> {
            samples
                .iter()
                .enumerate()
                .map(|(k, s)| EncodedSample::new(format!("{}_{k:04}", split.name()), s, &vocab, max_words))
                .collect()
        };
        let train = enc(Split::Train, train)?;
        let test = enc(Split::Test, test)?;
        Ok(Self { vocab, train, test })
    }

    /// Reads every sample listed in `dir/manifest.txt`. The vocabulary comes
    /// from `dir/vocab.txt` when present.
    pub fn load(dir: &Path, max_words: usize) -> Result<Self> {
        if !dir.join("manifest.txt").exists() {
            return Err(ModelError::Validation(format!("no dataset at {} (manifest.txt missing)", dir.display())));
        }
        let manifest = Manifest::read(dir)?;
        let vocab_path = dir.join("vocab.txt");
        let vocab = if vocab_path.exists() {
            Vocabulary::read(&vocab_path)?
        } else {
            data::vocabulary()
        };
        let mut out = Self {
            vocab,
            train: Vec::new(),
            test: Vec::new(),
        };
        for (id, split) in &manifest.entries {
            let s = EncodedSample::new(id.clone(), &data::read_sample(dir, id)?, &out.vocab, max_words)?;
            match split {
                Split::Train => out.train.push(s),
                Split::Test => out.test.push(s),
            }
        }
        Ok(out)
    }

    /// Generates the configured splits in memory, with the same seeds
    /// `write_dataset` uses.
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self> {
        let g = cfg.generator();
        let train = data::generate_split(cfg.n_train, Split::Train, cfg.data_seed, cfg.difficulty, &g)?;
        let test = data::generate_split(cfg.n_test, Split::Test, cfg.data_seed, cfg.difficulty, &g)?;
        Self::from_samples(data::vocabulary(), &train, &test, cfg.max_words)
    }

    pub fn split(&self, split: Split) -> &[EncodedSample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    fn check(&self, cfg: &ExperimentConfig) -> Result<()> {
        if self.train.is_empty() {
            return Err(ModelError::Validation("dataset has no training samples".into()));
        }
        let want = (cfg.frames, cfg.height, cfg.width);
        if let Some(s) = self.train.iter().chain(&self.test).find(|s| s.dims() != want) {
            return Err(ModelError::Validation(format!(
                "sample {} is {:?} (frames, height, width), config expects {want:?}",
                s.id,
                s.dims()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Joint,
    Branch(FeatureKind),
    Decoder,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Joint => f.write_str("joint"),
            Phase::Branch(k) => write!(f, "stage1-{}", k.name()),
            Phase::Decoder => f.write_str("stage2-decoder"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// Consecutive over the whole run, from 1.
    pub epoch: usize,
    pub phase: Phase,
    pub phase_epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub train_mean_iou: f64,
    pub test_mean_iou: Option<f64>,
    pub seconds: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {:>3} {:<16} lr={:.2e} loss={:.5} train_miou={:.4}",
            self.epoch, self.phase.to_string(), self.lr, self.mean_loss, self.train_mean_iou
        )?;
        if let Some(t) = self.test_mean_iou {
            write!(f, " test_miou={t:.4}")?;
        }
        write!(f, " {:.1}s", self.seconds)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Mean loss on the first batch of the first phase, before any update.
    pub first_batch_loss: Option<f64>,
    pub final_train: Option<EvalReport>,
    pub final_test: Option<EvalReport>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }

    pub fn to_text(&self) -> String {
        let mut s: String = self.epochs.iter().map(|e| format!("{e}\n")).collect();
        if let Some(r) = &self.final_train {
            s += &r.key_values("train");
        }
        if let Some(r) = &self.final_test {
            s += &r.key_values("test");
        }
        s
    }
}

/// Callback invoked after every epoch, e.g. for progress output.
pub type EpochHook<'a> = &'a mut dyn FnMut(&EpochLog);

/// Stream tags for [`derive_seed`].
const TAG_SPATIAL: u64 = 1;
const TAG_TEMPORAL: u64 = 2;
const TAG_JOINT: u64 = 3;
const TAG_SHUFFLE: u64 = 8;

/// Separate deterministic seeds per model and shuffle stream. Stage-1
/// branch models depend only on the run seed and the branch, so the same
/// branch is reproduced across variants.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(16).wrapping_add(tag)
}

fn branch_tag(kind: FeatureKind) -> u64 {
    match kind {
        FeatureKind::Spatial => TAG_SPATIAL,
        FeatureKind::Temporal => TAG_TEMPORAL,
    }
}

/// Step decay: divide by 10 every `every` epochs (1-based `epoch`).
pub fn learning_rate(base: f64, every: usize, epoch: usize) -> f64 {
    if every == 0 {
        return base;
    }
    base * 0.1f64.powi(((epoch - 1) / every) as i32)
}

fn logits_of(model: &Model, sample: &EncodedSample, cached: Option<&[BranchOutput]>) -> Result<Tensor> {
    Ok(match cached {
        Some(c) => model.decode_from(c)?.logits,
        None => model.forward(&sample.clip, &sample.query)?.decoder.logits,
    })
}

fn mask_of(logits: &Tensor) -> Result<BinaryMask> {
    let (h, w) = (logits.shape()[0], logits.shape()[1]);
    BinaryMask::from_logits(w, h, &logits.data())
}

/// Inference on `samples`: predicted masks, sigmoid > 0.5.
pub fn predict(model: &Model, samples: &[EncodedSample], cache: Option<&[Vec<BranchOutput>]>) -> Result<Vec<BinaryMask>> {
    let _guard = model.store.no_grad();
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| mask_of(&logits_of(model, s, cache.map(|c| c[i].as_slice()))?))
        .collect()
}

pub fn evaluate(model: &Model, samples: &[EncodedSample]) -> Result<EvalReport> {
    evaluate_with(model, samples, None)
}

fn evaluate_with(model: &Model, samples: &[EncodedSample], cache: Option<&[Vec<BranchOutput>]>) -> Result<EvalReport> {
    let preds = predict(model, samples, cache)?;
    aggregate_scores(
        preds
            .iter()
            .zip(samples)
            .map(|(p, s)| score(p, &s.mask))
            .collect::<Result<_>>()?,
    )
}

/// One optimization phase over the training split.
struct Fit<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a Dataset,
    log: &'a mut TrainLog,
    hook: EpochHook<'a>,
}

impl Fit<'_> {
    fn run(
        &mut self,
        model: &Model,
        phase: Phase,
        epochs: usize,
        shuffle_seed: u64,
        cache: Option<(&[Vec<BranchOutput>], &[Vec<BranchOutput>])>,
    ) -> Result<()> {
        let cfg = self.cfg;
        let train = &self.data.train;
        let mut adam = Adam::new(AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        });
        let mut rng = seeded(shuffle_seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for e in 1..=epochs {
            let start = Instant::now();
            let lr = learning_rate(cfg.lr, cfg.lr_decay_every, e);
            adam.set_lr(lr);
            order.shuffle(&mut rng);
            let mut total = 0.0;
            let mut scores = Vec::with_capacity(train.len());
            for batch in order.chunks(cfg.batch_size) {
                model.store.zero_grad();
                let mut batch_loss = 0.0;
                for &i in batch {
                    let s = &train[i];
                    let logits = logits_of(model, s, cache.map(|(c, _)| c[i].as_slice()))?;
                    let loss = logits.bce_with_logits(&s.target)?;
                    let value = loss.item()?;
                    if !value.is_finite() {
                        return Err(ModelError::Validation(format!("non-finite loss at epoch {e} on {}", s.id)));
                    }
                    batch_loss += value;
                    loss.scale(1.0 / batch.len() as f64).backward()?;
                    scores.push(score(&mask_of(&logits)?, &s.mask)?);
                }
                if self.log.first_batch_loss.is_none() {
                    self.log.first_batch_loss = Some(batch_loss / batch.len() as f64);
                }
                total += batch_loss;
                adam.step(model.store.iter());
            }
            model.store.zero_grad();
            let train_mean_iou = aggregate_scores(scores)?.mean_iou;
            let test_mean_iou = match cfg.stop_at_test_miou {
                Some(_) if !self.data.test.is_empty() => {
                    Some(evaluate_with(model, &self.data.test, cache.map(|(_, t)| t))?.mean_iou)
                }
                _ => None,
            };
            let entry = EpochLog {
                epoch: self.log.epochs.len() + 1,
                phase,
                phase_epoch: e,
                lr,
                mean_loss: total / train.len() as f64,
                train_mean_iou,
                test_mean_iou,
                seconds: start.elapsed().as_secs_f64(),
            };
            (self.hook)(&entry);
            self.log.epochs.push(entry);
            if let (Some(goal), Some(got)) = (cfg.stop_at_test_miou, test_mean_iou) {
                if got >= goal {
                    break;
                }
            }
        }
        Ok(())
    }
}

fn branch_config(cfg: &ExperimentConfig, vocab: usize, kind: FeatureKind) -> Result<ModelConfig> {
    let mut mc = cfg.model_config(vocab)?;
    mc.arch = mc.arch.branch(kind);
    Ok(mc)
}

/// Stage 1 for one branch: a single-branch model trained end to end.
pub fn train_branch(
    cfg: &ExperimentConfig,
    data: &Dataset,
    kind: FeatureKind,
    log: &mut TrainLog,
    hook: EpochHook<'_>,
) -> Result<Model> {
    let model = Model::new(branch_config(cfg, data.vocab.len(), kind)?, derive_seed(cfg.seed, branch_tag(kind)))?;
    let shuffle = derive_seed(cfg.seed, TAG_SHUFFLE + branch_tag(kind));
    Fit { cfg, data, log, hook }.run(&model, Phase::Branch(kind), cfg.epochs_stage1, shuffle, None)?;
    Ok(model)
}

/// Builds the joint model, copies each branch's encoder side from the
/// stage-1 models and freezes it.
pub fn assemble(cfg: &ExperimentConfig, vocab: usize, branches: &[&Model]) -> Result<Model> {
    let model = Model::new(cfg.model_config(vocab)?, derive_seed(cfg.seed, TAG_JOINT))?;
    for b in &model.branches {
        let src = branches
            .iter()
            .find(|m| m.branch(b.kind).is_some())
            .ok_or_else(|| ModelError::Usage(format!("no stage-1 model for the {} branch", b.kind.name())))?;
        let prefix = format!("{}.", b.kind.name());
        let copied = model.store.copy_matching(&src.store, &prefix)?;
        let expected = model.store.with_prefix(&prefix).count();
        if copied != expected {
            return Err(ModelError::Usage(format!(
                "stage-1 {} model supplied {copied} of {expected} parameters",
                b.kind.name()
            )));
        }
        let prefixes = Model::encoder_prefixes(b.kind, cfg.freeze_cmam);
        let refs: Vec<&str> = prefixes.iter().map(String::as_str).collect();
        model.store.set_trainable(&refs, false);
    }
    Ok(model)
}

/// Per-sample branch outputs of a model whose encoder side is frozen.
pub fn cache_branch_outputs(model: &Model, samples: &[EncodedSample]) -> Result<Vec<Vec<BranchOutput>>> {
    let _guard = model.store.no_grad();
    samples
        .iter()
        .map(|s| Ok(model.encode(&s.clip, &s.query)?.iter().map(BranchOutput::detach).collect()))
        .collect()
}

/// Stage 2: trains the decoder of the assembled model with frozen encoders.
/// Encoder outputs are computed once when nothing upstream is trainable.
pub fn train_decoder(
    cfg: &ExperimentConfig,
    data: &Dataset,
    branches: &[&Model],
    log: &mut TrainLog,
    hook: EpochHook<'_>,
) -> Result<Model> {
    let model = assemble(cfg, data.vocab.len(), branches)?;
    let upstream_frozen = model
        .store
        .iter()
        .filter(|p| !p.name.starts_with(crate::model::DECODER_PREFIX))
        .all(|p| !p.tensor.requires_grad());
    let shuffle = derive_seed(cfg.seed, TAG_SHUFFLE + TAG_JOINT);
    let mut fit = Fit { cfg, data, log, hook };
    if upstream_frozen {
        let train = cache_branch_outputs(&model, &data.train)?;
        let test = if cfg.stop_at_test_miou.is_some() {
            cache_branch_outputs(&model, &data.test)?
        } else {
            Vec::new()
        };
        fit.run(&model, Phase::Decoder, cfg.epochs_stage2, shuffle, Some((&train, &test)))?;
    } else {
        fit.run(&model, Phase::Decoder, cfg.epochs_stage2, shuffle, None)?;
    }
    Ok(model)
}

/// Runs the configured schedule and scores the final model on both splits.
pub fn train(cfg: &ExperimentConfig, data: &Dataset, hook: EpochHook<'_>) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    data.check(cfg)?;
    let arch = cfg.architecture()?;
    let mut log = TrainLog::default();
    let model = if cfg.joint {
        let model = Model::new(cfg.model_config(data.vocab.len())?, derive_seed(cfg.seed, TAG_JOINT))?;
        let shuffle = derive_seed(cfg.seed, TAG_SHUFFLE + TAG_JOINT);
        Fit { cfg, data, log: &mut log, hook }.run(&model, Phase::Joint, cfg.epochs_joint, shuffle, None)?;
        model
    } else if let [kind] = arch.kinds()[..] {
        train_branch(cfg, data, kind, &mut log, hook)?
    } else {
        let spatial = train_branch(cfg, data, FeatureKind::Spatial, &mut log, &mut *hook)?;
        let temporal = train_branch(cfg, data, FeatureKind::Temporal, &mut log, &mut *hook)?;
        train_decoder(cfg, data, &[&spatial, &temporal], &mut log, hook)?
    };
    log.final_train = Some(evaluate(&model, &data.train)?);
    if !data.test.is_empty() {
        log.final_test = Some(evaluate(&model, &data.test)?);
    }
    Ok((model, log))
}

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train_log.txt";

/// Writes the effective config, the checkpoint and the log into `dir`.
pub fn save_run(dir: &Path, cfg: &ExperimentConfig, model: &Model, log: &TrainLog) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
    let c = dir.join(CONFIG_FILE);
    fs::write(&c, cfg.to_text()).map_err(|e| ModelError::io(&c, e))?;
    model.store.save(&dir.join(CHECKPOINT_FILE))?;
    let l = dir.join(LOG_FILE);
    fs::write(&l, log.to_text()).map_err(|e| ModelError::io(&l, e))
}

/// Rebuilds the model described by `cfg` and loads its parameters.
pub fn load_model(cfg: &ExperimentConfig, vocab: usize, checkpoint: &Path) -> Result<Model> {
    let model = Model::new(cfg.model_config(vocab)?, 0)?;
    model.store.load(checkpoint).map_err(|e| {
        ModelError::Validation(format!(
            "checkpoint {} does not fit the configured {} model: {e}",
            checkpoint.display(),
            cfg.variant
        ))
    })?;
    Ok(model)
}

/// Writes predicted masks as `<dir>/<id>.pgm`.
pub fn write_predictions(dir: &Path, samples: &[EncodedSample], masks: &[BinaryMask]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
    for (s, m) in samples.iter().zip(masks) {
        m.to_image().write(&dir.join(format!("{}.pgm", s.id)))?;
    }
    Ok(())
}
