//! Model variants assembled from the text encoders, the visual encoders,
//! optional modulation, stage fusion and the decoder.

use std::fmt;
use std::str::FromStr;

use actorseg_tensor::{seeded, ParamStore, Tensor};

use crate::cmam::{cmam_spatial, cmam_temporal, projection_channels, AttentionDiagnostics, CmamParams};
use crate::decoder::{
    decode, fusion_variant, language_concat, selection_weights, ConcatParams, DecoderParams, DecoderState, FusionMode,
    LgfsParams,
};
use crate::error::{ModelError, Result};
use crate::text::{Query, TextEncoder};
use crate::visual::{target_index, target_slice, Encoder, FeatureKind, STAGES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    SpatialOnly,
    TemporalOnly,
    BothConcat,
    BothLgfs,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::SpatialOnly,
        Variant::TemporalOnly,
        Variant::BothConcat,
        Variant::BothLgfs,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SpatialOnly => "spatial_only",
            Variant::TemporalOnly => "temporal_only",
            Variant::BothConcat => "both_concat",
            Variant::BothLgfs => "both_lgfs",
            Variant::Full => "full",
        }
    }

    pub fn has_both_branches(self) -> bool {
        !matches!(self, Variant::SpatialOnly | Variant::TemporalOnly)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            ModelError::Validation(format!(
                "unknown variant {s:?} (expected spatial_only, temporal_only, both_concat, both_lgfs or full)"
            ))
        })
    }
}

/// Which pieces a model instance contains. Variants map onto this; stage-1
/// training also uses single-branch architectures with modulation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub spatial: bool,
    pub temporal: bool,
    /// Sorted, unique stages in 1..=5 that carry modulation.
    pub cmam_stages: Vec<usize>,
    /// Sentence-vector concatenation on every stage before fusion.
    pub language_concat: bool,
    /// Used only when both branches are present.
    pub fusion: FusionMode,
}

pub fn parse_stage_list(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let v: usize = tok
            .parse()
            .map_err(|_| ModelError::Validation(format!("bad stage {tok:?} in stage list")))?;
        out.push(v);
    }
    normalize_stages(out)
}

fn normalize_stages(mut stages: Vec<usize>) -> Result<Vec<usize>> {
    if let Some(bad) = stages.iter().find(|s| !(1..=STAGES).contains(s)) {
        return Err(ModelError::Validation(format!("modulation stage {bad} outside 1..={STAGES}")));
    }
    stages.sort_unstable();
    stages.dedup();
    Ok(stages)
}

impl Architecture {
    /// Enforces the per-variant constraints: fusion only with both branches
    /// (add or max for `both_concat`, lgfs otherwise), modulation stages
    /// only for `full` (all five when not given).
    pub fn from_variant(variant: Variant, fusion: Option<FusionMode>, cmam_stages: Option<Vec<usize>>) -> Result<Self> {
        let both = variant.has_both_branches();
        if !both && fusion.is_some() {
            return Err(ModelError::Validation(format!("fusion mode is meaningless for {variant}")));
        }
        if variant != Variant::Full && cmam_stages.as_ref().is_some_and(|s| !s.is_empty()) {
            return Err(ModelError::Validation(format!("cmam_stages must be empty for {variant}")));
        }
        let fusion = match (variant, fusion) {
            (Variant::BothConcat, None) => FusionMode::Add,
            (Variant::BothConcat, Some(FusionMode::Lgfs)) => {
                return Err(ModelError::Validation("both_concat takes add or max fusion; use both_lgfs".into()))
            }
            (Variant::BothLgfs | Variant::Full, Some(m)) if m != FusionMode::Lgfs => {
                return Err(ModelError::Validation(format!("{variant} uses lgfs fusion, not {m}")))
            }
            (_, m) => m.unwrap_or(FusionMode::Lgfs),
        };
        let cmam_stages = match variant {
            Variant::Full => normalize_stages(cmam_stages.unwrap_or_else(|| (1..=STAGES).collect()))?,
            _ => Vec::new(),
        };
        if variant == Variant::Full && cmam_stages.is_empty() {
            return Err(ModelError::Validation("full variant needs at least one modulation stage".into()));
        }
        Ok(Self {
            spatial: variant != Variant::TemporalOnly,
            temporal: variant != Variant::SpatialOnly,
            cmam_stages,
            language_concat: variant != Variant::Full,
            fusion,
        })
    }

    /// The single-branch model trained for `kind` in stage 1.
    pub fn branch(&self, kind: FeatureKind) -> Self {
        Self {
            spatial: kind == FeatureKind::Spatial,
            temporal: kind == FeatureKind::Temporal,
            ..self.clone()
        }
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        let mut out = Vec::new();
        if self.spatial {
            out.push(FeatureKind::Spatial);
        }
        if self.temporal {
            out.push(FeatureKind::Temporal);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub ladder: [usize; STAGES],
    pub c_l: usize,
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.arch.spatial && !self.arch.temporal {
            return Err(ModelError::Validation("model needs at least one branch".into()));
        }
        for (name, v) in [("height", self.height), ("width", self.width)] {
            if v < 16 || v % 16 != 0 {
                return Err(ModelError::Validation(format!("{name} {v} must be a positive multiple of 16")));
            }
        }
        if self.frames < 2 || self.frames % 2 != 0 {
            return Err(ModelError::Validation(format!("frame count {} must be even and >= 2", self.frames)));
        }
        if self.ladder.contains(&0) || self.c_l == 0 || self.embed_dim == 0 || self.vocab_size < 3 {
            return Err(ModelError::Validation("channel ladder, C_L, embedding and vocabulary must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub kind: FeatureKind,
    pub text: TextEncoder,
    pub encoder: Encoder,
    /// Indexed by stage − 1.
    pub cmam: Vec<Option<CmamParams>>,
}

/// Per-branch evidence the decoder consumes: target-frame features per
/// stage and the pooled sentence vector.
#[derive(Clone, Debug)]
pub struct BranchOutput {
    pub kind: FeatureKind,
    pub features: Vec<Tensor>,
    pub sentence: Tensor,
    /// `(stage, per-frame diagnostics)` for each modulated stage.
    pub attention: Vec<(usize, Vec<AttentionDiagnostics>)>,
}

impl BranchOutput {
    /// Copy cut from the graph, for reuse with frozen encoders.
    pub fn detach(&self) -> Self {
        Self {
            kind: self.kind,
            features: self.features.iter().map(Tensor::detach).collect(),
            sentence: self.sentence.detach(),
            attention: Vec::new(),
        }
    }
}

#[derive(Debug)]
pub struct ForwardOutput {
    pub branches: Vec<BranchOutput>,
    pub decoder: DecoderState,
}

#[derive(Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub branches: Vec<Branch>,
    /// Per branch, per stage; empty without language concatenation.
    pub concat: Vec<Vec<ConcatParams>>,
    /// Per stage; empty unless both branches fuse with lgfs.
    pub lgfs: Vec<LgfsParams>,
    pub decoder: DecoderParams,
}

pub const DECODER_PREFIX: &str = "decoder.";

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let arch = &config.arch;
        let mut branches = Vec::new();
        for kind in arch.kinds() {
            let k = kind.name();
            let text = TextEncoder::new(&mut store, &format!("{k}.text"), config.vocab_size, config.embed_dim, config.c_l, &mut rng)?;
            let encoder = Encoder::new(&mut store, &format!("{k}.encoder"), kind, &config.ladder, &mut rng)?;
            let mut cmam = Vec::with_capacity(STAGES);
            for i in 1..=STAGES {
                cmam.push(if arch.cmam_stages.contains(&i) {
                    let c_v = config.ladder[i - 1];
                    Some(CmamParams::new(&mut store, &format!("{k}.cmam.stage{i}"), c_v, projection_channels(c_v), config.c_l, &mut rng)?)
                } else {
                    None
                });
            }
            branches.push(Branch { kind, text, encoder, cmam });
        }
        let mut concat = Vec::new();
        if arch.language_concat {
            for b in &branches {
                let mut per_stage = Vec::with_capacity(STAGES);
                for i in 1..=STAGES {
                    let prefix = format!("decoder.concat.{}.stage{i}", b.kind.name());
                    per_stage.push(ConcatParams::new(&mut store, &prefix, config.ladder[i - 1], config.c_l, &mut rng)?);
                }
                concat.push(per_stage);
            }
        }
        let mut lgfs = Vec::new();
        if branches.len() == 2 && arch.fusion == FusionMode::Lgfs {
            for i in 1..=STAGES {
                lgfs.push(LgfsParams::new(&mut store, &format!("decoder.lgfs.stage{i}"), config.c_l, config.ladder[i - 1], &mut rng)?);
            }
        }
        let decoder = DecoderParams::new(&mut store, "decoder", &config.ladder, &mut rng)?;
        Ok(Self {
            config,
            store,
            branches,
            concat,
            lgfs,
            decoder,
        })
    }

    /// Parameter-name prefixes of the encoder side of `kind`, optionally
    /// leaving its modulation out.
    pub fn encoder_prefixes(kind: FeatureKind, include_cmam: bool) -> Vec<String> {
        let k = kind.name();
        let mut out = vec![format!("{k}.text."), format!("{k}.encoder.")];
        if include_cmam {
            out.push(format!("{k}.cmam."));
        }
        out
    }

    fn check_clip(&self, clip: &Tensor) -> Result<()> {
        let c = &self.config;
        let want = [c.frames, c.height, c.width, crate::visual::RGB];
        if clip.shape() != want {
            return Err(ModelError::Validation(format!("clip shape {:?}, model expects {want:?}", clip.shape())));
        }
        Ok(())
    }

    pub fn encode_branch(&self, branch: &Branch, clip: &Tensor, query: &Query) -> Result<BranchOutput> {
        self.check_clip(clip)?;
        let words = branch.text.encode(query)?;
        let sentence = words.pooled()?;
        let mut x = match branch.kind {
            FeatureKind::Spatial => clip.select_first(target_index(self.config.frames))?,
            FeatureKind::Temporal => clip.clone(),
        };
        let mut features = Vec::with_capacity(STAGES);
        let mut attention = Vec::new();
        for i in 1..=STAGES {
            let mut f = branch.encoder.stage(i, &x)?;
            if let Some(p) = &branch.cmam[i - 1] {
                f = match branch.kind {
                    FeatureKind::Spatial => {
                        let (f, d) = cmam_spatial(&f, &words, p)?;
                        attention.push((i, vec![d]));
                        f
                    }
                    FeatureKind::Temporal => {
                        let (f, d) = cmam_temporal(&f, &words, p)?;
                        attention.push((i, d));
                        f
                    }
                };
            }
            features.push(match branch.kind {
                FeatureKind::Spatial => f.tensor.clone(),
                FeatureKind::Temporal => target_slice(&f)?.tensor,
            });
            x = f.tensor;
        }
        Ok(BranchOutput {
            kind: branch.kind,
            features,
            sentence,
            attention,
        })
    }

    pub fn encode(&self, clip: &Tensor, query: &Query) -> Result<Vec<BranchOutput>> {
        self.branches.iter().map(|b| self.encode_branch(b, clip, query)).collect()
    }

    /// Fuses per-branch evidence stage by stage and decodes it.
    pub fn decode_from(&self, outputs: &[BranchOutput]) -> Result<DecoderState> {
        if outputs.len() != self.branches.len() || outputs.iter().zip(&self.branches).any(|(o, b)| o.kind != b.kind) {
            return Err(ModelError::Usage("branch outputs do not match the model's branches".into()));
        }
        let mixed_sentence = match outputs {
            [a, b] if !self.lgfs.is_empty() => Some(a.sentence.add(&b.sentence)?.scale(0.5)),
            _ => None,
        };
        let mut fused = Vec::with_capacity(STAGES);
        for i in 0..STAGES {
            let mut per_branch = Vec::with_capacity(outputs.len());
            for (b, o) in outputs.iter().enumerate() {
                per_branch.push(match self.concat.get(b) {
                    Some(cp) => language_concat(&o.features[i], &o.sentence, &cp[i])?,
                    None => o.features[i].clone(),
                });
            }
            fused.push(match per_branch.as_slice() {
                [v] => v.clone(),
                [vs, vt] => {
                    let weights = match &mixed_sentence {
                        Some(l) => Some(selection_weights(l, &self.lgfs[i])?),
                        None => None,
                    };
                    fusion_variant(self.config.arch.fusion, vs, vt, weights.as_ref().map(|(a, b)| (a, b)))?
                }
                _ => unreachable!("one or two branches"),
            });
        }
        decode(fused, &self.decoder)
    }

    pub fn forward(&self, clip: &Tensor, query: &Query) -> Result<ForwardOutput> {
        let branches = self.encode(clip, query)?;
        let decoder = self.decode_from(&branches)?;
        Ok(ForwardOutput { branches, decoder })
    }

    pub fn branch(&self, kind: FeatureKind) -> Option<&Branch> {
        self.branches.iter().find(|b| b.kind == kind)
    }
}
