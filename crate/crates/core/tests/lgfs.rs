use actorseg::decoder::{decode, fuse, fusion_variant, pair_softmax, selection_weights, DecoderParams, FusionMode, LgfsParams};
use actorseg_tensor::rng::uniform_vec;
use actorseg_tensor::{seeded, ParamStore, Tensor};
use proptest::prelude::*;

fn random(shape: &[usize], seed: u64, bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(uniform_vec(&mut seeded(seed), n, bound), shape).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_weights_sum_to_one(c_l in 1usize..6, c_v in 1usize..9, seed in any::<u64>(), scale in 0.1f64..20.0) {
        let mut store = ParamStore::new();
        let p = LgfsParams::new(&mut store, "lgfs", c_l, c_v, &mut seeded(seed)).unwrap();
        let (gs, gt) = selection_weights(&random(&[c_l], seed ^ 1, scale), &p).unwrap();
        for (a, b) in gs.to_vec().iter().zip(gt.to_vec()) {
            prop_assert!((a + b - 1.0).abs() < 1e-12);
            prop_assert!(*a >= 0.0 && b >= 0.0);
        }
    }

    #[test]
    fn fusion_stays_in_the_channel_hull(h in 1usize..5, w in 1usize..5, c in 1usize..5, seed in any::<u64>()) {
        let vs = random(&[h, w, c], seed, 3.0);
        let vt = random(&[h, w, c], seed ^ 2, 3.0);
        let (gs, gt) = pair_softmax(&random(&[c], seed ^ 3, 4.0), &random(&[c], seed ^ 4, 4.0)).unwrap();
        let f = fuse(&vs, &vt, &gs, &gt).unwrap().to_vec();
        for (i, ((a, b), y)) in vs.to_vec().iter().zip(vt.to_vec()).zip(f).enumerate() {
            let (lo, hi) = (a.min(b), a.max(b));
            let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            prop_assert!(y >= lo - slack && y <= hi + slack, "element {i}: {y} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn pair_shift_invariance(c in 1usize..8, seed in any::<u64>(), shift in -50.0f64..50.0) {
        let gs = random(&[c], seed, 5.0);
        let gt = random(&[c], seed ^ 9, 5.0);
        let (a, b) = pair_softmax(&gs, &gt).unwrap();
        let (a2, b2) = pair_softmax(&gs.add_scalar(shift), &gt.add_scalar(shift)).unwrap();
        for (x, y) in a.to_vec().iter().chain(b.to_vec().iter()).zip(a2.to_vec().iter().chain(b2.to_vec().iter())) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn max_and_add_fusion(h in 1usize..4, c in 1usize..4, seed in any::<u64>()) {
        let vs = random(&[h, h, c], seed, 1.0);
        let vt = random(&[h, h, c], seed ^ 5, 1.0);
        let add = fusion_variant(FusionMode::Add, &vs, &vt, None).unwrap().to_vec();
        let max = fusion_variant(FusionMode::Max, &vs, &vt, None).unwrap().to_vec();
        for (i, (a, b)) in vs.to_vec().iter().zip(vt.to_vec()).enumerate() {
            prop_assert_eq!(add[i], a + b);
            prop_assert_eq!(max[i], a.max(b));
        }
    }
}

#[test]
fn lgfs_needs_weights() {
    let v = Tensor::zeros(&[2, 2, 1]);
    assert!(fusion_variant(FusionMode::Lgfs, &v, &v, None).is_err());
}

#[test]
fn decoder_recursion_matches_manual_composition() {
    let ladder = [2, 3, 2, 3, 2];
    let mut store = ParamStore::new();
    let p = DecoderParams::new(&mut store, "dec", &ladder, &mut seeded(3)).unwrap();
    let fused: Vec<Tensor> = (0..5).map(|i| random(&[16 >> i, 16 >> i, ladder[i]], 10 + i as u64, 1.0)).collect();
    let state = decode(fused.clone(), &p).unwrap();
    let mut d = fused[4].clone();
    for i in (0..4).rev() {
        d = fused[i].add(&d.conv2d(&p.projections[i], None, 1, 0).unwrap().upsample_bilinear_2x().unwrap()).unwrap();
        assert_eq!(state.decoded[i].to_vec(), d.to_vec());
    }
    let logits = d.conv2d(&p.head_weight, Some(&p.head_bias), 1, 0).unwrap();
    assert_eq!(state.logits.shape(), &[16, 16]);
    assert_eq!(state.logits.to_vec(), logits.to_vec());
}

#[test]
fn decoder_rejects_broken_ladders() {
    let ladder = [2; 5];
    let mut store = ParamStore::new();
    let p = DecoderParams::new(&mut store, "dec", &ladder, &mut seeded(3)).unwrap();
    let mut fused: Vec<Tensor> = (0..5).map(|i| Tensor::zeros(&[16 >> i, 16 >> i, 2])).collect();
    fused[2] = Tensor::zeros(&[3, 3, 2]);
    assert!(decode(fused, &p).is_err());
    assert!(decode(vec![Tensor::zeros(&[16, 16, 2])], &p).is_err());
}
