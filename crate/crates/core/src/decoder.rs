//! Stage-wise fusion of spatial and temporal features and the top-down
//! decoder that turns them into full-resolution mask logits.

use std::fmt;
use std::str::FromStr;

use actorseg_tensor::{ParamStore, SeededRng, Tensor};

use crate::error::{ModelError, Result};
use crate::visual::STAGES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionMode {
    Add,
    Max,
    Lgfs,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [FusionMode::Add, FusionMode::Max, FusionMode::Lgfs];

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::Add => "add",
            FusionMode::Max => "max",
            FusionMode::Lgfs => "lgfs",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ModelError::Validation(format!("unknown fusion mode {s:?} (expected add, max or lgfs)")))
    }
}

/// Two sentence-conditioned linear maps per stage.
#[derive(Clone, Debug)]
pub struct LgfsParams {
    pub spatial_weight: Tensor,
    pub spatial_bias: Tensor,
    pub temporal_weight: Tensor,
    pub temporal_bias: Tensor,
}

impl LgfsParams {
    pub fn new(store: &mut ParamStore, prefix: &str, c_l: usize, c_v: usize, rng: &mut SeededRng) -> Result<Self> {
        Ok(Self {
            spatial_weight: store.uniform(format!("{prefix}.spatial.weight"), &[c_l, c_v], c_l, rng)?,
            spatial_bias: store.uniform(format!("{prefix}.spatial.bias"), &[c_v], c_l, rng)?,
            temporal_weight: store.uniform(format!("{prefix}.temporal.weight"), &[c_l, c_v], c_l, rng)?,
            temporal_bias: store.uniform(format!("{prefix}.temporal.bias"), &[c_v], c_l, rng)?,
        })
    }
}

/// Per-channel softmax over the (spatial, temporal) pair of raw weights.
pub fn selection_weights(sentence: &Tensor, params: &LgfsParams) -> Result<(Tensor, Tensor)> {
    let gs = sentence.linear(&params.spatial_weight, Some(&params.spatial_bias))?;
    let gt = sentence.linear(&params.temporal_weight, Some(&params.temporal_bias))?;
    pair_softmax(&gs, &gt)
}

/// Softmax over each `(g_s[c], g_t[c])` pair.
pub fn pair_softmax(gs: &Tensor, gt: &Tensor) -> Result<(Tensor, Tensor)> {
    let pair = Tensor::stack_first(&[gs.clone(), gt.clone()])?.softmax(0)?;
    Ok((pair.select_first(0)?, pair.select_first(1)?))
}

/// `Ṽ_S ⊙ g̃_S + Ṽ_T ⊙ g̃_T`.
pub fn fuse(vs: &Tensor, vt: &Tensor, gs: &Tensor, gt: &Tensor) -> Result<Tensor> {
    if vs.shape() != vt.shape() {
        return Err(actorseg_tensor::TensorError::shape("fuse", vs.shape(), vt.shape()).into());
    }
    Ok(vs.mul_channel(gs)?.add(&vt.mul_channel(gt)?)?)
}

/// Combines two stage features; `weights` is required for LGFS.
pub fn fusion_variant(mode: FusionMode, vs: &Tensor, vt: &Tensor, weights: Option<(&Tensor, &Tensor)>) -> Result<Tensor> {
    match mode {
        FusionMode::Add => Ok(vs.add(vt)?),
        FusionMode::Max => Ok(vs.maximum(vt)?),
        FusionMode::Lgfs => {
            let (gs, gt) = weights.ok_or_else(|| ModelError::Usage("lgfs fusion needs selection weights".into()))?;
            fuse(vs, vt, gs, gt)
        }
    }
}

/// Baseline language fusion: the sentence vector is appended to every
/// location, then a 1×1 convolution with relu maps back to `C_V`.
#[derive(Clone, Debug)]
pub struct ConcatParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConcatParams {
    pub fn new(store: &mut ParamStore, prefix: &str, c_v: usize, c_l: usize, rng: &mut SeededRng) -> Result<Self> {
        Ok(Self {
            weight: store.uniform(format!("{prefix}.weight"), &[1, 1, c_v + c_l, c_v], c_v + c_l, rng)?,
            bias: store.zeros(format!("{prefix}.bias"), &[c_v])?,
        })
    }
}

pub fn language_concat(v: &Tensor, sentence: &Tensor, params: &ConcatParams) -> Result<Tensor> {
    Ok(v.concat_broadcast(sentence)?.conv2d(&params.weight, Some(&params.bias), 1, 0)?.relu())
}

/// Channel projections between consecutive stages and the 1-logit head.
#[derive(Clone, Debug)]
pub struct DecoderParams {
    /// `projections[i]` maps stage `i + 2` channels to stage `i + 1`.
    pub projections: Vec<Tensor>,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

impl DecoderParams {
    pub fn new(store: &mut ParamStore, prefix: &str, ladder: &[usize; STAGES], rng: &mut SeededRng) -> Result<Self> {
        let mut projections = Vec::with_capacity(STAGES - 1);
        for i in 0..STAGES - 1 {
            let (hi, lo) = (ladder[i + 1], ladder[i]);
            projections.push(store.uniform(format!("{prefix}.proj.stage{}.weight", i + 2), &[1, 1, hi, lo], hi, rng)?);
        }
        Ok(Self {
            projections,
            head_weight: store.uniform(format!("{prefix}.head.weight"), &[1, 1, ladder[0], 1], ladder[0], rng)?,
            head_bias: store.zeros(format!("{prefix}.head.bias"), &[1])?,
        })
    }

    pub fn ladder(&self) -> [usize; STAGES] {
        let mut out = [0; STAGES];
        for (i, p) in self.projections.iter().enumerate() {
            out[i] = p.shape()[3];
            out[i + 1] = p.shape()[2];
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct DecoderState {
    /// `V_F^i` for stages 1..5 in index order.
    pub fused: Vec<Tensor>,
    /// `V_D^i` for stages 1..5 in index order.
    pub decoded: Vec<Tensor>,
    /// `H×W` mask logits.
    pub logits: Tensor,
}

fn check_ladder(fused: &[Tensor], params: &DecoderParams) -> Result<()> {
    if fused.len() != STAGES {
        return Err(ModelError::Validation(format!("decoder needs {STAGES} fused features, got {}", fused.len())));
    }
    let ladder = params.ladder();
    let (h, w) = match fused[0].shape() {
        [h, w, _] => (*h, *w),
        s => return Err(ModelError::Validation(format!("stage 1 feature must be H×W×C, got {s:?}"))),
    };
    for (i, f) in fused.iter().enumerate() {
        let want = [h >> i, w >> i, ladder[i]];
        if f.shape() != want || (h >> i) << i != h || (w >> i) << i != w {
            return Err(ModelError::Validation(format!(
                "stage {} feature {:?} breaks the ladder (expected {want:?})",
                i + 1,
                f.shape()
            )));
        }
    }
    Ok(())
}

/// Top-down pass `V_D^5 = V_F^5`, `V_D^i = V_F^i + up(proj(V_D^{i+1}))`,
/// then the 1×1 head on `V_D^1`.
pub fn decode(fused: Vec<Tensor>, params: &DecoderParams) -> Result<DecoderState> {
    check_ladder(&fused, params)?;
    let mut decoded: Vec<Tensor> = vec![fused[STAGES - 1].clone()];
    for i in (0..STAGES - 1).rev() {
        let above = decoded.last().expect("seeded with stage 5");
        let up = above.conv2d(&params.projections[i], None, 1, 0)?.upsample_bilinear_2x()?;
        decoded.push(fused[i].add(&up)?);
    }
    decoded.reverse();
    let (h, w) = (fused[0].shape()[0], fused[0].shape()[1]);
    let logits = decoded[0]
        .conv2d(&params.head_weight, Some(&params.head_bias), 1, 0)?
        .reshape(&[h, w])?;
    Ok(DecoderState { fused, decoded, logits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use actorseg_tensor::rng::uniform_vec;
    use actorseg_tensor::seeded;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(uniform_vec(&mut seeded(seed), n, 1.0), shape).unwrap()
    }

    fn lgfs(c_l: usize, c_v: usize, seed: u64) -> (ParamStore, LgfsParams) {
        let mut store = ParamStore::new();
        let p = LgfsParams::new(&mut store, "lgfs", c_l, c_v, &mut seeded(seed)).unwrap();
        (store, p)
    }

    #[test]
    fn fusion_mode_parsing() {
        assert_eq!("lgfs".parse::<FusionMode>().unwrap(), FusionMode::Lgfs);
        assert!("mean".parse::<FusionMode>().is_err());
        assert_eq!(FusionMode::Max.to_string(), "max");
    }

    #[test]
    fn symmetric_maps_split_evenly() {
        let (_s, p) = lgfs(3, 4, 1);
        p.temporal_weight.data_mut().copy_from_slice(&p.spatial_weight.data());
        p.temporal_bias.data_mut().copy_from_slice(&p.spatial_bias.data());
        let (gs, gt) = selection_weights(&random(&[3], 2), &p).unwrap();
        assert!(gs.data().iter().chain(gt.data().iter()).all(|&v| v == 0.5));
    }

    #[test]
    fn logistic_oracle_and_saturation() {
        let (gs, gt) = pair_softmax(&Tensor::from_slice(&[1.0, 50.0]), &Tensor::from_slice(&[0.0, 0.0])).unwrap();
        let e = 1f64.exp();
        assert!((gs.data()[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((gs.data()[0] - 0.7311).abs() < 1e-4);
        assert!((gs.data()[1] - 1.0).abs() < 1e-9);
        assert!((gt.data()[0] - 1.0 / (e + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn fuse_cases() {
        let g = Tensor::from_slice(&[0.7311]);
        let out = fuse(&Tensor::full(&[1, 1, 1], 2.0), &Tensor::full(&[1, 1, 1], 4.0), &g, &Tensor::from_slice(&[1.0 - 0.7311])).unwrap();
        assert!((out.item().unwrap() - 2.5378).abs() < 1e-12);
        let v = random(&[2, 2, 3], 3);
        let (gs, gt) = pair_softmax(&random(&[3], 4), &random(&[3], 5)).unwrap();
        for (a, b) in fuse(&v, &v, &gs, &gt).unwrap().to_vec().iter().zip(v.to_vec()) {
            assert!((a - b).abs() < 1e-15);
        }
        let ones = Tensor::ones(&[3]);
        let vt = random(&[2, 2, 3], 6);
        assert_eq!(fuse(&v, &vt, &ones, &Tensor::zeros(&[3])).unwrap().to_vec(), v.to_vec());
        assert!(fuse(&v, &random(&[2, 3, 3], 7), &gs, &gt).is_err());
    }

    #[test]
    fn variants() {
        let v = random(&[2, 2, 3], 8);
        assert_eq!(fusion_variant(FusionMode::Max, &v, &v, None).unwrap().to_vec(), v.to_vec());
        assert_eq!(fusion_variant(FusionMode::Add, &v, &Tensor::zeros(&[2, 2, 3]), None).unwrap().to_vec(), v.to_vec());
        assert!(fusion_variant(FusionMode::Lgfs, &v, &v, None).is_err());
        let vt = random(&[2, 2, 3], 9);
        let (gs, gt) = pair_softmax(&Tensor::from_slice(&[0.3, 1.0, -2.0]), &Tensor::zeros(&[3])).unwrap();
        let add = fusion_variant(FusionMode::Add, &v, &vt, None).unwrap().to_vec();
        let lg = fusion_variant(FusionMode::Lgfs, &v, &vt, Some((&gs, &gt))).unwrap().to_vec();
        assert!(add.iter().zip(&lg).all(|(a, b)| a != b));
    }

    #[test]
    fn language_concat_shape() {
        let mut store = ParamStore::new();
        let p = ConcatParams::new(&mut store, "cat", 3, 2, &mut seeded(10)).unwrap();
        let out = language_concat(&random(&[4, 4, 3], 11), &random(&[2], 12), &p).unwrap();
        assert_eq!(out.shape(), &[4, 4, 3]);
        assert!(out.data().iter().all(|&v| v >= 0.0));
    }

    fn decoder(ladder: [usize; 5], seed: u64) -> (ParamStore, DecoderParams) {
        let mut store = ParamStore::new();
        let p = DecoderParams::new(&mut store, "decoder", &ladder, &mut seeded(seed)).unwrap();
        (store, p)
    }

    fn pyramid(side: usize, ladder: [usize; 5], seed: u64) -> Vec<Tensor> {
        (0..5).map(|i| random(&[side >> i, side >> i, ladder[i]], seed + i as u64)).collect()
    }

    #[test]
    fn zero_features_give_head_bias() {
        let ladder = [2, 3, 4, 5, 6];
        let (_s, p) = decoder(ladder, 13);
        p.head_bias.data_mut()[0] = 0.25;
        let fused: Vec<Tensor> = (0..5).map(|i| Tensor::zeros(&[32 >> i, 32 >> i, ladder[i]])).collect();
        let st = decode(fused, &p).unwrap();
        assert!(st.logits.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn full_resolution_and_ladder_checks() {
        let ladder = [2, 2, 2, 2, 2];
        let (_s, p) = decoder(ladder, 14);
        for side in [32, 64] {
            let st = decode(pyramid(side, ladder, 15), &p).unwrap();
            assert_eq!(st.logits.shape(), &[side, side]);
            for (i, d) in st.decoded.iter().enumerate() {
                assert_eq!(d.shape(), st.fused[i].shape());
            }
        }
        let mut bad = pyramid(32, ladder, 16);
        bad[2] = Tensor::zeros(&[7, 7, 2]);
        assert!(decode(bad, &p).is_err());
        assert!(decode(pyramid(32, ladder, 17)[..4].to_vec(), &p).is_err());
    }

    #[test]
    fn only_top_stage_matters_when_lower_are_zero() {
        let ladder = [2, 3, 2, 3, 2];
        let (_s, p) = decoder(ladder, 18);
        let top = random(&[2, 2, 2], 19);
        let mut fused: Vec<Tensor> = (0..4).map(|i| Tensor::zeros(&[32 >> i, 32 >> i, ladder[i]])).collect();
        fused.push(top.clone());
        let got = decode(fused, &p).unwrap().logits.to_vec();
        let mut x = top;
        for i in (0..4).rev() {
            x = x.conv2d(&p.projections[i], None, 1, 0).unwrap().upsample_bilinear_2x().unwrap();
        }
        let want = x.conv2d(&p.head_weight, Some(&p.head_bias), 1, 0).unwrap().to_vec();
        assert_eq!(got, want);
    }
}
