//! Five-stage 2-D (target frame) and 3-D (clip) convolutional encoders with
//! a coordinate feature concatenated before every stage.

use actorseg_tensor::{ParamStore, SeededRng, Tensor};

use crate::error::{ModelError, Result};

pub const STAGES: usize = 5;
pub const DEFAULT_LADDER: [usize; STAGES] = [16, 32, 64, 96, 128];
pub const COORD_CHANNELS: usize = 8;
pub const RGB: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Spatial,
    Temporal,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Spatial => "spatial",
            FeatureKind::Temporal => "temporal",
        }
    }
}

/// Output of one encoder stage: `H×W×C` (spatial) or `T×H×W×C` (temporal).
#[derive(Clone, Debug)]
pub struct StageFeature {
    pub stage: usize,
    pub kind: FeatureKind,
    pub tensor: Tensor,
}

impl StageFeature {
    pub fn new(stage: usize, kind: FeatureKind, tensor: Tensor) -> Result<Self> {
        if !(1..=STAGES).contains(&stage) {
            return Err(ModelError::Validation(format!("stage {stage} outside 1..={STAGES}")));
        }
        let want = match kind {
            FeatureKind::Spatial => 3,
            FeatureKind::Temporal => 4,
        };
        if tensor.ndim() != want {
            return Err(ModelError::Validation(format!(
                "{} feature must be {want}-D, got shape {:?}",
                kind.name(),
                tensor.shape()
            )));
        }
        Ok(Self { stage, kind, tensor })
    }

    pub fn channels(&self) -> usize {
        *self.tensor.shape().last().expect("non-scalar")
    }

    /// `(H, W)` of the feature.
    pub fn extent(&self) -> (usize, usize) {
        let s = self.tensor.shape();
        (s[s.len() - 3], s[s.len() - 2])
    }
}

/// Index of the annotated frame in a clip of `t` frames.
pub fn target_index(t: usize) -> usize {
    t / 2
}

/// `H×W×8` map: normalized column position in channels 0, 2, 4, normalized
/// row position in 1, 3, 5, then `1/H` and `1/W`.
pub fn coordinate_feature(h: usize, w: usize) -> Result<Tensor> {
    if h < 2 || w < 2 {
        return Err(ModelError::Validation(format!("coordinate grid needs h, w >= 2, got {h}x{w}")));
    }
    let mut data = Vec::with_capacity(h * w * COORD_CHANNELS);
    for i in 0..h {
        let y = 2.0 * i as f64 / (h - 1) as f64 - 1.0;
        for j in 0..w {
            let x = 2.0 * j as f64 / (w - 1) as f64 - 1.0;
            data.extend_from_slice(&[x, y, x, y, x, y, 1.0 / h as f64, 1.0 / w as f64]);
        }
    }
    Ok(Tensor::new(data, &[h, w, COORD_CHANNELS])?)
}

/// Middle-frame feature of a temporal stage output.
pub fn target_slice(v: &StageFeature) -> Result<StageFeature> {
    if v.kind != FeatureKind::Temporal {
        return Err(ModelError::Usage("target_slice needs a temporal feature".into()));
    }
    let t = v.tensor.shape()[0];
    StageFeature::new(v.stage, FeatureKind::Spatial, v.tensor.select_first(target_index(t))?)
}

/// Two `k=3` convolutions of one stage.
#[derive(Clone, Debug)]
pub struct StageParams {
    pub conv1: Tensor,
    pub bias1: Tensor,
    pub conv2: Tensor,
    pub bias2: Tensor,
}

impl StageParams {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        kind: FeatureKind,
        c_in: usize,
        c_out: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let taps: &[usize] = match kind {
            FeatureKind::Spatial => &[3, 3],
            FeatureKind::Temporal => &[3, 3, 3],
        };
        let k = taps.iter().product::<usize>();
        let c1 = c_in + COORD_CHANNELS;
        let shape1: Vec<usize> = taps.iter().copied().chain([c1, c_out]).collect();
        let shape2: Vec<usize> = taps.iter().copied().chain([c_out, c_out]).collect();
        Ok(Self {
            conv1: store.uniform(format!("{prefix}.conv1.weight"), &shape1, k * c1, rng)?,
            bias1: store.zeros(format!("{prefix}.conv1.bias"), &[c_out])?,
            conv2: store.uniform(format!("{prefix}.conv2.weight"), &shape2, k * c_out, rng)?,
            bias2: store.zeros(format!("{prefix}.conv2.bias"), &[c_out])?,
        })
    }

    pub fn out_channels(&self) -> usize {
        *self.conv2.shape().last().expect("kernel")
    }

    /// Input channels expected before the coordinate feature is appended.
    pub fn in_channels(&self) -> usize {
        self.conv1.shape()[self.conv1.ndim() - 2] - COORD_CHANNELS
    }
}

fn stage_stride(i: usize) -> usize {
    if i >= 2 {
        2
    } else {
        1
    }
}

fn check_stage_input(i: usize, x: &Tensor, coord: &Tensor, params: &StageParams, spatial_dims: usize) -> Result<()> {
    if !(1..=STAGES).contains(&i) {
        return Err(ModelError::Validation(format!("stage {i} outside 1..={STAGES}")));
    }
    let s = x.shape();
    if s.len() != spatial_dims + 1 || s[s.len() - 1] != params.in_channels() {
        return Err(ModelError::Validation(format!(
            "stage {i} expects {} input channels, got shape {s:?}",
            params.in_channels()
        )));
    }
    let hw = &s[s.len() - 3..s.len() - 1];
    if coord.shape() != [hw[0], hw[1], COORD_CHANNELS] {
        return Err(ModelError::Validation(format!(
            "coordinate feature {:?} does not match stage input {s:?}",
            coord.shape()
        )));
    }
    Ok(())
}

/// `relu(conv(relu(conv([x ⊕ coord]))))` on an `H×W×C` input; the first
/// convolution downsamples by 2 from stage 2 on.
pub fn spatial_stage(i: usize, x: &Tensor, coord: &Tensor, params: &StageParams) -> Result<StageFeature> {
    check_stage_input(i, x, coord, params, 2)?;
    let s = stage_stride(i);
    let y = Tensor::concat_last(&[x.clone(), coord.clone()])?
        .conv2d(&params.conv1, Some(&params.bias1), s, 1)?
        .relu()
        .conv2d(&params.conv2, Some(&params.bias2), 1, 1)?
        .relu();
    StageFeature::new(i, FeatureKind::Spatial, y)
}

/// Clip counterpart of [`spatial_stage`] on `T×H×W×C` with 3×3×3 kernels,
/// temporal stride 1 and the coordinate feature repeated on every frame.
pub fn temporal_stage(i: usize, x: &Tensor, coord: &Tensor, params: &StageParams) -> Result<StageFeature> {
    check_stage_input(i, x, coord, params, 3)?;
    let t = x.shape()[0];
    let coords = Tensor::stack_first(&vec![coord.clone(); t])?;
    let s = stage_stride(i);
    let y = Tensor::concat_last(&[x.clone(), coords])?
        .conv3d(&params.conv1, Some(&params.bias1), [1, s, s], [1, 1, 1])?
        .relu()
        .conv3d(&params.conv2, Some(&params.bias2), [1, 1, 1], [1, 1, 1])?
        .relu();
    StageFeature::new(i, FeatureKind::Temporal, y)
}

/// Stack of five stages for one branch.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub kind: FeatureKind,
    pub stages: Vec<StageParams>,
}

impl Encoder {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        kind: FeatureKind,
        ladder: &[usize; STAGES],
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut stages = Vec::with_capacity(STAGES);
        let mut c_in = RGB;
        for (i, &c) in ladder.iter().enumerate() {
            stages.push(StageParams::new(store, &format!("{prefix}.stage{}", i + 1), kind, c_in, c, rng)?);
            c_in = c;
        }
        Ok(Self { kind, stages })
    }

    /// Runs stage `i` (1-based) on `x`, building the coordinate feature at
    /// the input resolution.
    pub fn stage(&self, i: usize, x: &Tensor) -> Result<StageFeature> {
        let s = x.shape();
        if s.len() < 3 {
            return Err(ModelError::Validation(format!("encoder input must be at least 3-D, got {s:?}")));
        }
        let coord = coordinate_feature(s[s.len() - 3], s[s.len() - 2])?;
        let params = self
            .stages
            .get(i.wrapping_sub(1))
            .ok_or_else(|| ModelError::Validation(format!("stage {i} outside 1..={STAGES}")))?;
        match self.kind {
            FeatureKind::Spatial => spatial_stage(i, x, &coord, params),
            FeatureKind::Temporal => temporal_stage(i, x, &coord, params),
        }
    }

    /// All five stages without modulation.
    pub fn forward(&self, input: &Tensor) -> Result<Vec<StageFeature>> {
        let mut out: Vec<StageFeature> = Vec::with_capacity(STAGES);
        for i in 1..=STAGES {
            let x = out.last().map_or(input, |f| &f.tensor);
            let f = self.stage(i, x)?;
            out.push(f);
        }
        Ok(out)
    }
}
