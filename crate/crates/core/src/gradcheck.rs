//! Finite-difference gradient suites for every model component.
//!
//! The encoder suite redraws its parameters with a He-style uniform scale
//! and nonzero biases so that relu inputs stay away from zero and early
//! stages keep gradients well above the relative-error floor.

use std::fmt;
use std::str::FromStr;

use actorseg_tensor::gradcheck::{check_gradients, primitive_suite, project, projection, GradCheckReport, DEFAULT_STEP};
use actorseg_tensor::rng::uniform_vec;
use actorseg_tensor::{seeded, ParamStore, SeededRng, Tensor};

use crate::cmam::{cmam_frame, cmam_temporal, CmamParams};
use crate::decoder::{decode, fuse, fusion_variant, language_concat, selection_weights, ConcatParams, DecoderParams, FusionMode, LgfsParams};
use crate::error::{ModelError, Result};
use crate::text::{tokenize, TextEncoder, Vocabulary};
use crate::visual::{Encoder, FeatureKind, StageFeature, STAGES};

pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;
pub const COMPOSITE_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Tensor,
    Text,
    Visual,
    Cmam,
    Decoder,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Tensor, Suite::Text, Suite::Visual, Suite::Cmam, Suite::Decoder];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Tensor => "tensor",
            Suite::Text => "text",
            Suite::Visual => "visual",
            Suite::Cmam => "cmam",
            Suite::Decoder => "decoder",
        }
    }

    /// Parses a module selector; `all` selects every suite.
    pub fn parse_selector(s: &str) -> Result<Vec<Suite>> {
        if s == "all" {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',').map(|p| p.trim().parse()).collect()
    }
}

impl FromStr for Suite {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ModelError::Usage(format!("unknown gradcheck module `{s}` (all, tensor, text, visual, cmam, decoder)")))
    }
}

#[derive(Clone, Debug)]
pub struct GradRow {
    pub suite: &'static str,
    pub name: String,
    pub report: GradCheckReport,
    pub tolerance: f64,
}

impl GradRow {
    pub fn passes(&self) -> bool {
        self.report.passes(self.tolerance)
    }
}

impl fmt::Display for GradRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} max_rel_err={:.3e} tol={:.0e} elements={}",
            if self.passes() { "PASS" } else { "FAIL" },
            format!("{}/{}", self.suite, self.name),
            self.report.max_rel_error,
            self.tolerance,
            self.report.elements
        )
    }
}

pub fn run(suites: &[Suite], seed: u64) -> Result<Vec<GradRow>> {
    let mut rows = Vec::new();
    for &s in suites {
        rows.extend(match s {
            Suite::Tensor => tensor_suite(seed)?,
            Suite::Text => text_suite(seed)?,
            Suite::Visual => visual_suite(seed)?,
            Suite::Cmam => cmam_suite(seed)?,
            Suite::Decoder => decoder_suite(seed)?,
        });
    }
    Ok(rows)
}

fn row(suite: Suite, name: &str, report: GradCheckReport, tolerance: f64) -> GradRow {
    GradRow {
        suite: suite.name(),
        name: name.to_string(),
        report,
        tolerance,
    }
}

fn tensor_suite(seed: u64) -> Result<Vec<GradRow>> {
    Ok(primitive_suite(seed)?
        .into_iter()
        .map(|e| row(Suite::Tensor, &e.name, e.report, PRIMITIVE_TOLERANCE))
        .collect())
}

/// Redraws every parameter: weights uniform in `±sqrt(6 / fan_in)` with
/// `fan_in = numel / last_dim`, 1-D tensors uniform in `±0.5`.
pub fn randomize(store: &ParamStore, rng: &mut SeededRng) {
    for p in store.iter() {
        let shape = p.tensor.shape().to_vec();
        let n = p.tensor.numel();
        let bound = if shape.len() < 2 {
            0.5
        } else {
            (6.0 * shape[shape.len() - 1] as f64 / n as f64).sqrt()
        };
        p.tensor.data_mut().copy_from_slice(&uniform_vec(rng, n, bound));
    }
}

fn leaf(rng: &mut SeededRng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::param(uniform_vec(rng, n, 1.0), shape).expect("length matches shape")
}

fn params_of(store: &ParamStore) -> Vec<Tensor> {
    store.iter().map(|p| p.tensor.clone()).collect()
}

fn sum_projections(terms: &[(Tensor, Tensor)]) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for (y, w) in terms {
        let t = project(y, w)?;
        total = Some(match total {
            Some(acc) => acc.add(&t)?,
            None => t,
        });
    }
    total.ok_or_else(|| ModelError::Usage("nothing to project".into()))
}

fn text_suite(seed: u64) -> Result<Vec<GradRow>> {
    let mut rng = seeded(seed ^ 0x7e47);
    let vocab = Vocabulary::new(["the", "red", "circle"])?;
    let query = tokenize("the red circle", &vocab, 20)?;
    let mut store = ParamStore::new();
    let enc = TextEncoder::new(&mut store, "text", vocab.len(), 3, 4, &mut rng)?;
        let w = projection(&[3, 4], &mut rng);
    let report = check_gradients(&params_of(&store), DEFAULT_STEP, || project(&enc.encode(&query).map_err(err)?.words, &w))?;
    let wp = projection(&[4], &mut rng);
    let pooled = check_gradients(&params_of(&store), DEFAULT_STEP, || project(&enc.encode(&query).map_err(err)?.pooled().map_err(err)?, &wp))?;
    Ok(vec![
        row(Suite::Text, "gru_encode", report, PRIMITIVE_TOLERANCE),
        row(Suite::Text, "gru_pooled", pooled, PRIMITIVE_TOLERANCE),
    ])
}

fn err(e: ModelError) -> actorseg_tensor::TensorError {
    actorseg_tensor::TensorError::Usage(e.to_string())
}

fn visual_suite(seed: u64) -> Result<Vec<GradRow>> {
    let mut rows = Vec::new();
    let clip_shape = [4, 16, 16, 3];
    for kind in [FeatureKind::Spatial, FeatureKind::Temporal] {
        let mut rng = seeded(seed ^ 0x5157 ^ kind as u64);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, "enc", kind, &[2; STAGES], &mut rng)?;
        randomize(&store, &mut rng);
        let clip = leaf(&mut rng, &clip_shape);
        let input = match kind {
            FeatureKind::Spatial => clip.select_first(1)?.detach(),
            FeatureKind::Temporal => clip.detach(),
        };
        input.data_mut().iter_mut().for_each(|v| *v = 0.5 * (*v + 1.0));
        let shapes: Vec<Vec<usize>> = enc.forward(&input)?.iter().map(|f| f.tensor.shape().to_vec()).collect();
        let weights: Vec<Tensor> = shapes.iter().map(|s| projection(s, &mut rng)).collect();
        let loss = || -> actorseg_tensor::Result<Tensor> {
            let feats = enc.forward(&input).map_err(err)?;
            let terms: Vec<(Tensor, Tensor)> = feats.into_iter().map(|f: StageFeature| f.tensor).zip(weights.iter().cloned()).collect();
            sum_projections(&terms).map_err(err)
        };
        let report = check_gradients(&params_of(&store), DEFAULT_STEP, loss)?;
        rows.push(row(Suite::Visual, &format!("{}_encoder", kind.name()), report, COMPOSITE_TOLERANCE));
    }
    Ok(rows)
}

fn cmam_suite(seed: u64) -> Result<Vec<GradRow>> {
    let (h, w, c_v, c_m, c_l, n) = (3, 3, 4, 4, 4, 3);
    let mut rng = seeded(seed ^ 0xc3a3);
    let mut store = ParamStore::new();
    let params = CmamParams::new(&mut store, "cmam", c_v, c_m, c_l, &mut rng)?;
        let v = leaf(&mut rng, &[h, w, c_v]);
    let words = leaf(&mut rng, &[n, c_l]);
    let mut inputs = vec![v.clone(), words.clone()];
    inputs.extend(params_of(&store));
    let wp = projection(&[h, w, c_v], &mut rng);
    let frame = check_gradients(&inputs, DEFAULT_STEP, || {
        let wf = crate::text::WordFeatures { words: words.clone() };
        project(&cmam_frame(&v, &wf, &params).map_err(err)?.0, &wp)
    })?;

    let clip = leaf(&mut rng, &[2, h, w, c_v]);
    let mut inputs = vec![clip.clone(), words.clone()];
    inputs.extend(params_of(&store));
    let wt = projection(&[2, h, w, c_v], &mut rng);
    let temporal = check_gradients(&inputs, DEFAULT_STEP, || {
        let wf = crate::text::WordFeatures { words: words.clone() };
        let f = StageFeature::new(1, FeatureKind::Temporal, clip.clone()).map_err(err)?;
        project(&cmam_temporal(&f, &wf, &params).map_err(err)?.0.tensor, &wt)
    })?;
    Ok(vec![
        row(Suite::Cmam, "cmam_frame", frame, COMPOSITE_TOLERANCE),
        row(Suite::Cmam, "cmam_temporal", temporal, COMPOSITE_TOLERANCE),
    ])
}

fn decoder_suite(seed: u64) -> Result<Vec<GradRow>> {
    let ladder = [2; STAGES];
    let c_l = 3;
    let side = 16;
    let mut rng = seeded(seed ^ 0xdec0);
    let mut store = ParamStore::new();
    let lgfs: Vec<LgfsParams> = (1..=STAGES)
        .map(|i| LgfsParams::new(&mut store, &format!("lgfs.stage{i}"), c_l, ladder[i - 1], &mut rng))
        .collect::<Result<_>>()?;
    let concat = ConcatParams::new(&mut store, "concat", ladder[0], c_l, &mut rng)?;
    let dec = DecoderParams::new(&mut store, "decoder", &ladder, &mut rng)?;
        let sentence = leaf(&mut rng, &[c_l]);
    let shapes: Vec<[usize; 3]> = (0..STAGES).map(|i| [side >> i, side >> i, ladder[i]]).collect();
    let vs: Vec<Tensor> = shapes.iter().map(|s| leaf(&mut rng, s)).collect();
    let vt: Vec<Tensor> = shapes.iter().map(|s| leaf(&mut rng, s)).collect();
    let mut rows = Vec::new();

    let p0 = &lgfs[0];
    let mut ins = vec![sentence.clone()];
    ins.extend([&p0.spatial_weight, &p0.spatial_bias, &p0.temporal_weight, &p0.temporal_bias].map(Tensor::clone));
    let wg = projection(&[ladder[0]], &mut rng);
    let wg2 = projection(&[ladder[0]], &mut rng);
    let r = check_gradients(&ins, DEFAULT_STEP, || {
        let (gs, gt) = selection_weights(&sentence, p0).map_err(err)?;
        Ok(project(&gs, &wg)?.add(&project(&gt, &wg2)?)?)
    })?;
    rows.push(row(Suite::Decoder, "selection_weights", r, COMPOSITE_TOLERANCE));

    let w0 = projection(&shapes[0], &mut rng);
    let mut ins = vec![vs[0].clone(), vt[0].clone(), sentence.clone()];
    ins.extend([&p0.spatial_weight, &p0.spatial_bias, &p0.temporal_weight, &p0.temporal_bias].map(Tensor::clone));
    let r = check_gradients(&ins, DEFAULT_STEP, || {
        let (gs, gt) = selection_weights(&sentence, p0).map_err(err)?;
        project(&fuse(&vs[0], &vt[0], &gs, &gt).map_err(err)?, &w0)
    })?;
    rows.push(row(Suite::Decoder, "lgfs_fuse", r, COMPOSITE_TOLERANCE));

    for mode in [FusionMode::Add, FusionMode::Max] {
        let r = check_gradients(&[vs[0].clone(), vt[0].clone()], DEFAULT_STEP, || {
            project(&fusion_variant(mode, &vs[0], &vt[0], None).map_err(err)?, &w0)
        })?;
        rows.push(row(Suite::Decoder, &format!("fusion_{}", mode.name()), r, COMPOSITE_TOLERANCE));
    }

    let ins = vec![vs[0].clone(), sentence.clone(), concat.weight.clone(), concat.bias.clone()];
    let r = check_gradients(&ins, DEFAULT_STEP, || {
        project(&language_concat(&vs[0], &sentence, &concat).map_err(err)?, &w0)
    })?;
    rows.push(row(Suite::Decoder, "language_concat", r, COMPOSITE_TOLERANCE));

    let wl = projection(&[side, side], &mut rng);
    let mut ins: Vec<Tensor> = vs.clone();
    ins.extend(dec.projections.iter().cloned());
    ins.extend([dec.head_weight.clone(), dec.head_bias.clone()]);
    let r = check_gradients(&ins, DEFAULT_STEP, || {
        project(&decode(vs.clone(), &dec).map_err(err)?.logits, &wl)
    })?;
    rows.push(row(Suite::Decoder, "decode", r, COMPOSITE_TOLERANCE));

    let mut ins: Vec<Tensor> = vs.iter().chain(&vt).cloned().collect();
    ins.push(sentence.clone());
    ins.extend(params_of(&store).into_iter().filter(|t| !Tensor::ptr_eq(t, &concat.weight) && !Tensor::ptr_eq(t, &concat.bias)));
    let r = check_gradients(&ins, DEFAULT_STEP, || {
        let mut fused = Vec::with_capacity(STAGES);
        for i in 0..STAGES {
            let (gs, gt) = selection_weights(&sentence, &lgfs[i]).map_err(err)?;
            fused.push(fuse(&vs[i], &vt[i], &gs, &gt).map_err(err)?);
        }
        project(&decode(fused, &dec).map_err(err)?.logits, &wl)
    })?;
    rows.push(row(Suite::Decoder, "lgfs_decode", r, COMPOSITE_TOLERANCE));
    Ok(rows)
}

/// Harness self-test: a unary op whose backward reports `sin` instead of
/// `cos`. The returned row must fail.
pub fn corrupted_fixture() -> Result<GradRow> {
    let x = Tensor::param(vec![0.3, -0.7, 1.1, 2.0], &[4])?;
    let report = check_gradients(&[x.clone()], DEFAULT_STEP, || Ok(x.map_with_grad(f64::sin, f64::sin).sum()))?;
    Ok(GradRow {
        suite: "fixture",
        name: "corrupted_sin".into(),
        report,
        tolerance: PRIMITIVE_TOLERANCE,
    })
}
