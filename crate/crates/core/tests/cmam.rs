use actorseg::cmam::{adaptive_sentence, cmam_frame, modulate, relevance_from_projections, word_relevance, CmamParams};
use actorseg::text::WordFeatures;
use actorseg_tensor::rng::uniform_vec;
use actorseg_tensor::{seeded, ParamStore, Tensor};
use proptest::prelude::*;

fn random(shape: &[usize], seed: u64, bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(uniform_vec(&mut seeded(seed), n, bound), shape).unwrap()
}

fn params(c_v: usize, c_m: usize, c_l: usize, seed: u64) -> (ParamStore, CmamParams) {
    let mut store = ParamStore::new();
    let p = CmamParams::new(&mut store, "cmam", c_v, c_m, c_l, &mut seeded(seed)).unwrap();
    (store, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn word_weights_form_a_distribution(n in 1usize..8, hw in 1usize..20, c_m in 1usize..6, seed in any::<u64>(), scale in 0.01f64..100.0) {
        let words = random(&[n, c_m], seed, scale);
        let locs = random(&[hw, c_m], seed ^ 1, 1.0);
        let w = relevance_from_projections(&words, &locs).unwrap().weights.to_vec();
        let total: f64 = w.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn weights_ignore_relevance_scale(n in 1usize..8, hw in 1usize..20, seed in any::<u64>(), c in 1e-3f64..1e3) {
        let words = random(&[n, 3], seed, 1.0);
        let locs = random(&[hw, 3], seed ^ 7, 1.0);
        let base = relevance_from_projections(&words, &locs).unwrap();
        let scaled = relevance_from_projections(&words, &locs.scale(c)).unwrap();
        for (o, s) in base.omega.to_vec().iter().zip(scaled.omega.to_vec()) {
            prop_assert!((o * c - s).abs() <= 1e-9 * s.abs().max(1.0));
        }
        for (a, b) in base.weights.to_vec().iter().zip(scaled.weights.to_vec()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sentence_lies_in_the_word_hull(n in 1usize..6, c_l in 1usize..5, seed in any::<u64>()) {
        let words = random(&[n, c_l], seed, 2.0);
        let w = random(&[n], seed ^ 3, 1.0).softmax(0).unwrap();
        let s = adaptive_sentence(&words, &w).unwrap().to_vec();
        let wd = words.to_vec();
        for (c, v) in s.iter().enumerate() {
            let col: Vec<f64> = (0..n).map(|k| wd[k * c_l + c]).collect();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn gate_keeps_output_between_one_and_two_times_input(seed in any::<u64>()) {
        let (_s, p) = params(4, 8, 3, seed);
        let v = random(&[3, 3, 4], seed ^ 5, 1.0);
        let out = modulate(&v, &random(&[3], seed ^ 9, 1.0), &p).unwrap().to_vec();
        for (x, y) in v.to_vec().iter().zip(out) {
            let r = y / x;
            prop_assert!(r > 1.0 && r < 2.0);
        }
    }
}

#[test]
fn zero_parameters_scale_input_by_one_and_a_half() {
    let (store, p) = params(4, 8, 3, 1);
    store.iter().for_each(|q| q.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0));
    let v = random(&[3, 5, 4], 2, 3.0);
    let words = WordFeatures { words: random(&[4, 3], 3, 1.0) };
    let (out, diag) = cmam_frame(&v, &words, &p).unwrap();
    for (x, y) in v.to_vec().iter().zip(out.to_vec()) {
        assert_eq!(y, 1.5 * x);
    }
    // zero projections: all relevance is 0 and the weights are uniform
    assert!(diag.weights.to_vec().iter().all(|&w| (w - 0.25).abs() < 1e-15));
}

#[test]
fn two_word_hand_computed_case() {
    // A = [[1], [2]] over one location: ω = (1, 2), normalized (0.4472, 0.8944).
    let words = Tensor::new(vec![1.0, 2.0], &[2, 1]).unwrap();
    let locs = Tensor::new(vec![1.0], &[1, 1]).unwrap();
    let d = relevance_from_projections(&words, &locs).unwrap();
    let w = d.weights.to_vec();
    assert!((w[0] - 0.3900).abs() < 1e-3, "{w:?}");
    assert!((w[1] - 0.6100).abs() < 1e-3, "{w:?}");
    let r = 1.0 / 5f64.sqrt();
    let oracle0 = (r).exp() / ((r).exp() + (2.0 * r).exp());
    assert!((w[0] - oracle0).abs() < 1e-15);
}

#[test]
fn relevance_matches_explicit_sums() {
    let (_s, p) = params(3, 2, 2, 4);
    let v = random(&[2, 2, 3], 5, 1.0);
    let words = random(&[3, 2], 6, 1.0);
    let d = word_relevance(&v, &words, &p).unwrap();
    let (vd, wd, pv, pw) = (v.to_vec(), words.to_vec(), p.visual.to_vec(), p.word.to_vec());
    for k in 0..3 {
        let lk: Vec<f64> = (0..2).map(|m| (0..2).map(|c| wd[k * 2 + c] * pw[c * 2 + m]).sum()).collect();
        let mut omega = 0.0;
        for loc in 0..4 {
            let vl: Vec<f64> = (0..2).map(|m| (0..3).map(|c| vd[loc * 3 + c] * pv[c * 2 + m]).sum()).collect();
            let a: f64 = lk.iter().zip(&vl).map(|(x, y)| x * y).sum();
            assert!((d.attention.to_vec()[k * 4 + loc] - a).abs() < 1e-12);
            omega += a;
        }
        assert!((d.omega.to_vec()[k] - omega).abs() < 1e-12);
    }
}

#[test]
fn attention_maps_are_written_per_word() {
    let (_s, p) = params(2, 8, 2, 7);
    let v = random(&[4, 4, 2], 8, 1.0);
    let words = random(&[3, 2], 9, 1.0);
    let d = word_relevance(&v, &words, &p).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = actorseg::cmam::write_attention_maps(&d, 4, 4, dir.path(), "s1").unwrap();
    assert_eq!(paths.len(), 3);
    let img = actorseg::pnm::Image::read(&paths[0]).unwrap();
    assert_eq!((img.width, img.height, img.channels), (4, 4, 1));
}
