//! Cross-modal adaptive modulation: words are reweighted by their relevance
//! to the whole frame, recombined into a sentence vector, and that vector
//! gates the visual channels residually.

use std::path::{Path, PathBuf};

use actorseg_tensor::{ParamStore, SeededRng, Tensor};

use crate::error::{ModelError, Result};
use crate::pnm::Image;
use crate::text::WordFeatures;
use crate::visual::{FeatureKind, StageFeature};

/// Guard on `‖ω‖₂`; below it the normalized relevance is taken as zero.
pub const OMEGA_EPS: f64 = 1e-12;

/// Projection width for a stage of `c_v` visual channels.
pub fn projection_channels(c_v: usize) -> usize {
    (c_v / 2).max(8)
}

#[derive(Clone, Debug)]
pub struct CmamParams {
    /// 1×1 convolution `[1×1×C_V×C_M]`, no bias.
    pub visual: Tensor,
    /// Width-1 word convolution `[C_L×C_M]`, no bias.
    pub word: Tensor,
    pub modulation_weight: Tensor,
    pub modulation_bias: Tensor,
}

impl CmamParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        c_v: usize,
        c_m: usize,
        c_l: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(Self {
            visual: store.uniform(format!("{prefix}.visual_proj.weight"), &[1, 1, c_v, c_m], c_v, rng)?,
            word: store.uniform(format!("{prefix}.word_proj.weight"), &[c_l, c_m], c_l, rng)?,
            modulation_weight: store.uniform(format!("{prefix}.linear.weight"), &[c_l, c_v], c_l, rng)?,
            modulation_bias: store.uniform(format!("{prefix}.linear.bias"), &[c_v], c_l, rng)?,
        })
    }

    pub fn visual_channels(&self) -> usize {
        self.modulation_bias.numel()
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.visual, &self.word, &self.modulation_weight, &self.modulation_bias]
    }
}

/// Word–location relevance `A` (`N×HW`), its location marginal `ω` and the
/// normalized word weights `ω̃`.
#[derive(Clone, Debug)]
pub struct AttentionDiagnostics {
    pub attention: Tensor,
    pub omega: Tensor,
    pub weights: Tensor,
}

/// Relevance from already projected words `[N×C_M]` and locations
/// `[HW×C_M]`.
pub fn relevance_from_projections(words: &Tensor, locations: &Tensor) -> Result<AttentionDiagnostics> {
    let attention = words.matmul(&locations.t()?)?;
    let omega = attention.sum_axis(1)?;
    let weights = omega.l2_normalize(OMEGA_EPS).softmax(0)?;
    Ok(AttentionDiagnostics {
        attention,
        omega,
        weights,
    })
}

pub fn word_relevance(v: &Tensor, words: &Tensor, params: &CmamParams) -> Result<AttentionDiagnostics> {
    if v.ndim() != 3 || words.ndim() != 2 || words.shape()[0] == 0 {
        return Err(ModelError::Validation(format!(
            "word_relevance expects H×W×C and N×C_L with N >= 1, got {:?} and {:?}",
            v.shape(),
            words.shape()
        )));
    }
    let (h, w) = (v.shape()[0], v.shape()[1]);
    let c_m = params.word.shape()[1];
    let locations = v.conv2d(&params.visual, None, 1, 0)?.reshape(&[h * w, c_m])?;
    let projected = words.linear(&params.word, None)?;
    relevance_from_projections(&projected, &locations)
}

/// `Σ_k ω̃_k L_k`; the weights must sum to 1 within 1e-9.
pub fn adaptive_sentence(words: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let n = weights.numel();
    if words.ndim() != 2 || words.shape()[0] != n {
        return Err(ModelError::Validation(format!(
            "{n} word weights for word features {:?}",
            words.shape()
        )));
    }
    let total: f64 = weights.data().iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(ModelError::Validation(format!("word weights sum to {total}, not 1")));
    }
    let c_l = words.shape()[1];
    Ok(weights.reshape(&[1, n])?.matmul(words)?.reshape(&[c_l])?)
}

/// `V + V ⊙ σ(Linear(l))` with the gate broadcast over locations.
pub fn modulate(v: &Tensor, sentence: &Tensor, params: &CmamParams) -> Result<Tensor> {
    let gate = sentence
        .linear(&params.modulation_weight, Some(&params.modulation_bias))?
        .sigmoid();
    Ok(v.add(&v.mul_channel(&gate)?)?)
}

/// Relevance, sentence recombination and modulation on one `H×W×C_V` frame.
pub fn cmam_frame(v: &Tensor, words: &WordFeatures, params: &CmamParams) -> Result<(Tensor, AttentionDiagnostics)> {
    let diag = word_relevance(v, &words.words, params)?;
    let sentence = adaptive_sentence(&words.words, &diag.weights)?;
    Ok((modulate(v, &sentence, params)?, diag))
}

fn check_channels(v: &StageFeature, params: &CmamParams) -> Result<()> {
    if v.channels() != params.visual_channels() {
        return Err(ModelError::Validation(format!(
            "stage {} has {} channels, modulation expects {}",
            v.stage,
            v.channels(),
            params.visual_channels()
        )));
    }
    Ok(())
}

pub fn cmam_spatial(
    v: &StageFeature,
    words: &WordFeatures,
    params: &CmamParams,
) -> Result<(StageFeature, AttentionDiagnostics)> {
    if v.kind != FeatureKind::Spatial {
        return Err(ModelError::Usage("cmam_spatial needs a spatial feature".into()));
    }
    check_channels(v, params)?;
    let (out, diag) = cmam_frame(&v.tensor, words, params)?;
    Ok((StageFeature::new(v.stage, v.kind, out)?, diag))
}

/// Applies [`cmam_frame`] independently to every frame of the clip.
pub fn cmam_temporal(
    v: &StageFeature,
    words: &WordFeatures,
    params: &CmamParams,
) -> Result<(StageFeature, Vec<AttentionDiagnostics>)> {
    if v.kind != FeatureKind::Temporal {
        return Err(ModelError::Usage("cmam_temporal needs a temporal feature".into()));
    }
    check_channels(v, params)?;
    let t = v.tensor.shape()[0];
    let mut frames = Vec::with_capacity(t);
    let mut diags = Vec::with_capacity(t);
    for f in 0..t {
        let (out, diag) = cmam_frame(&v.tensor.select_first(f)?, words, params)?;
        frames.push(out);
        diags.push(diag);
    }
    Ok((StageFeature::new(v.stage, v.kind, Tensor::stack_first(&frames)?)?, diags))
}

/// Writes one `h×w` heatmap per word, each row of `A` min-max scaled to
/// 0..255, as `<stem>_word<k>.pgm` in `dir`.
pub fn write_attention_maps(diag: &AttentionDiagnostics, h: usize, w: usize, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let a = diag.attention.to_vec();
    let n = diag.attention.shape()[0];
    if a.len() != n * h * w {
        return Err(ModelError::Validation(format!("attention {:?} is not N×{h}·{w}", diag.attention.shape())));
    }
    let mut paths = Vec::with_capacity(n);
    for k in 0..n {
        let row = &a[k * h * w..(k + 1) * h * w];
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut img = Image::new(w, h, 1);
        for (px, v) in img.data.iter_mut().zip(row) {
            *px = (255.0 * (v - lo) / span).round() as u8;
        }
        let path = dir.join(format!("{stem}_word{k}.pgm"));
        img.write(&path)?;
        paths.push(path);
    }
    Ok(paths)
}
