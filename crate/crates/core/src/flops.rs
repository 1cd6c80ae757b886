//! Analytic multiply-accumulate counts of one forward pass.
//!
//! Counts follow the shapes alone: a convolution with `P` output positions,
//! patch length `K` and `O` output channels costs `P·K·O`; a product of an
//! `m×k` and a `k×n` matrix costs `m·k·n`. Elementwise work is not counted.

use std::collections::BTreeMap;
use std::fmt::Write;

use actorseg_tensor::{with_mac_tally, MacTally, Tensor};

use crate::cmam::projection_channels;
use crate::error::Result;
use crate::model::{Model, ModelConfig};
use crate::text::Query;
use crate::visual::{FeatureKind, COORD_CHANNELS, RGB, STAGES};

/// Words in a typical generated query ("red circle is moving left").
pub const DEFAULT_QUERY_WORDS: usize = 5;

/// Full-scale spatial-encoder share quoted for the original system, printed
/// next to the measured share for reference.
pub const REFERENCE_SPATIAL_SHARE: f64 = 9.2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub name: String,
    /// Tally key of the operation: `matmul`, `conv2d` or `conv3d`.
    pub op: &'static str,
    pub branch: Option<FeatureKind>,
    pub macs: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlopsReport {
    pub components: Vec<Component>,
}

impl FlopsReport {
    fn push(&mut self, name: String, op: &'static str, branch: Option<FeatureKind>, macs: u64) {
        self.components.push(Component { name, op, branch, macs });
    }

    pub fn total(&self) -> u64 {
        self.components.iter().map(|c| c.macs).sum()
    }

    pub fn by_op(&self) -> BTreeMap<&'static str, u64> {
        let mut m = BTreeMap::new();
        for c in &self.components {
            *m.entry(c.op).or_insert(0) += c.macs;
        }
        m
    }

    /// Text encoder, visual encoder and modulation of one branch.
    pub fn branch_total(&self, kind: FeatureKind) -> u64 {
        self.components.iter().filter(|c| c.branch == Some(kind)).map(|c| c.macs).sum()
    }

    /// Convolutional stages of one branch only.
    pub fn encoder_total(&self, kind: FeatureKind) -> u64 {
        let prefix = format!("{}.encoder.", kind.name());
        self.components.iter().filter(|c| c.name.starts_with(&prefix)).map(|c| c.macs).sum()
    }

    fn percent(&self, part: u64) -> f64 {
        100.0 * part as f64 / self.total().max(1) as f64
    }

    pub fn spatial_branch_percent(&self) -> f64 {
        self.percent(self.branch_total(FeatureKind::Spatial))
    }

    pub fn spatial_encoder_percent(&self) -> f64 {
        self.percent(self.encoder_total(FeatureKind::Spatial))
    }

    pub fn to_text(&self) -> String {
        let width = self.components.iter().map(|c| c.name.len()).max().unwrap_or(0).max(9);
        let mut s = format!("{:<width$}  {:<7}  {:>14}\n", "component", "op", "MACs");
        for c in &self.components {
            let _ = writeln!(s, "{:<width$}  {:<7}  {:>14}", c.name, c.op, c.macs);
        }
        let _ = writeln!(s, "{:<width$}  {:<7}  {:>14}", "total", "", self.total());
        for (op, m) in self.by_op() {
            let _ = writeln!(s, "macs.{op}={m}");
        }
        let _ = writeln!(s, "macs.total={}", self.total());
        let _ = writeln!(s, "spatial_branch_percent={:.2}", self.spatial_branch_percent());
        let _ = writeln!(s, "spatial_encoder_percent={:.2}", self.spatial_encoder_percent());
        let _ = writeln!(s, "reference_full_scale_spatial_encoder_percent={REFERENCE_SPATIAL_SHARE}");
        s
    }
}

/// Counts the forward pass of `cfg` on a query of `n_words` words.
pub fn count(cfg: &ModelConfig, n_words: usize) -> FlopsReport {
    let mut r = FlopsReport::default();
    let n = n_words as u64;
    let (c_l, e) = (cfg.c_l as u64, cfg.embed_dim as u64);
    let t = cfg.frames as u64;
    let side = |i: usize| ((cfg.height >> i) as u64, (cfg.width >> i) as u64);
    let ladder: Vec<u64> = cfg.ladder.iter().map(|&c| c as u64).collect();

    for kind in cfg.arch.kinds() {
        let k = kind.name();
        let b = Some(kind);
        r.push(format!("{k}.text.gru"), "matmul", b, n * 3 * (e + c_l) * c_l);
        let (op, taps, frames) = match kind {
            FeatureKind::Spatial => ("conv2d", 9, 1),
            FeatureKind::Temporal => ("conv3d", 27, t),
        };
        let mut c_in = RGB as u64;
        for i in 1..=STAGES {
            let (h, w) = side(i - 1);
            let p = frames * h * w;
            let c = ladder[i - 1];
            r.push(format!("{k}.encoder.stage{i}.conv1"), op, b, p * taps * (c_in + COORD_CHANNELS as u64) * c);
            r.push(format!("{k}.encoder.stage{i}.conv2"), op, b, p * taps * c * c);
            if cfg.arch.cmam_stages.contains(&i) {
                let c_m = projection_channels(cfg.ladder[i - 1]) as u64;
                let hw = h * w;
                let pre = format!("{k}.cmam.stage{i}");
                r.push(format!("{pre}.visual_proj"), "conv2d", b, frames * hw * c * c_m);
                r.push(format!("{pre}.word_proj"), "matmul", b, frames * n * c_l * c_m);
                r.push(format!("{pre}.relevance"), "matmul", b, frames * n * c_m * hw);
                r.push(format!("{pre}.sentence"), "matmul", b, frames * n * c_l);
                r.push(format!("{pre}.linear"), "matmul", b, frames * c_l * c);
            }
            c_in = c;
        }
    }
    for kind in cfg.arch.kinds().into_iter().filter(|_| cfg.arch.language_concat) {
        for i in 1..=STAGES {
            let (h, w) = side(i - 1);
            let c = ladder[i - 1];
            r.push(format!("decoder.concat.{}.stage{i}", kind.name()), "conv2d", None, h * w * (c + c_l) * c);
        }
    }
    if cfg.arch.spatial && cfg.arch.temporal && cfg.arch.fusion == crate::decoder::FusionMode::Lgfs {
        for i in 1..=STAGES {
            r.push(format!("decoder.lgfs.stage{i}"), "matmul", None, 2 * c_l * ladder[i - 1]);
        }
    }
    for i in (1..STAGES).rev() {
        let (h, w) = side(i);
        r.push(format!("decoder.proj.stage{}", i + 1), "conv2d", None, h * w * ladder[i] * ladder[i - 1]);
    }
    let (h, w) = side(0);
    r.push("decoder.head".into(), "conv2d", None, h * w * ladder[0]);
    r
}

/// Per-operation tallies recorded while actually running the model: the
/// whole forward pass and the spatial branch's encoding alone.
#[derive(Clone, Debug)]
pub struct MeasuredMacs {
    pub forward: MacTally,
    pub spatial_branch: Option<MacTally>,
}

pub fn measure(cfg: &ModelConfig, n_words: usize, seed: u64) -> Result<MeasuredMacs> {
    let model = Model::new(cfg.clone(), seed)?;
    let _guard = model.store.no_grad();
    let clip = Tensor::full(&[cfg.frames, cfg.height, cfg.width, RGB], 0.5);
    let query = Query {
        text: String::new(),
        ids: (0..n_words).map(|k| 2 + k % (cfg.vocab_size - 2)).collect(),
    };
    let (out, forward) = with_mac_tally(|| model.forward(&clip, &query));
    out?;
    let spatial_branch = match model.branch(FeatureKind::Spatial) {
        Some(b) => {
            let (out, t) = with_mac_tally(|| model.encode_branch(b, &clip, &query));
            out?;
            Some(t)
        }
        None => None,
    };
    Ok(MeasuredMacs { forward, spatial_branch })
}
