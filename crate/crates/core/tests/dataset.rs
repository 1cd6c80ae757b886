use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use actorseg::data::{self, parse_query, Action, Actor, Color, Difficulty, GeneratorConfig, SceneSpec, ShapeKind, Split};
use actorseg::metrics::{iou, BinaryMask};
use actorseg::pnm::Image;
use actorseg::visual::target_index;
use proptest::prelude::*;

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            for (k, v) in files(&p) {
                out.insert(format!("{}/{k}", p.file_name().unwrap().to_string_lossy()), v);
            }
        } else {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
        }
    }
    out
}

#[test]
fn generation_is_byte_identical_across_runs() {
    let cfg = GeneratorConfig::default();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        data::write_dataset(d.path(), 3, 2, 11, Difficulty::Ambiguous, &cfg).unwrap();
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 1 + 1 + 5 * 11);
    assert_eq!(fa, fb);
}

#[test]
fn different_seeds_give_different_scenes() {
    let cfg = GeneratorConfig::default();
    let a = data::generate_scene(1, Difficulty::Easy, &cfg).unwrap();
    let b = data::generate_scene(2, Difficulty::Easy, &cfg).unwrap();
    assert_ne!(a, b);
}

fn centroid(m: &BinaryMask) -> (f64, f64) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for i in 0..m.height {
        for j in 0..m.width {
            if m.data[i * m.width + j] {
                sx += j as f64 + 0.5;
                sy += i as f64 + 0.5;
                n += 1.0;
            }
        }
    }
    (sx / n, sy / n)
}

/// Mask of the pixels painted in `color`, read back from a rendered frame.
fn color_mask(img: &Image, color: Color) -> BinaryMask {
    let rgb = color.rgb();
    BinaryMask {
        width: img.width,
        height: img.height,
        data: img.data.chunks(3).map(|p| p == rgb).collect(),
    }
}

#[test]
fn centroid_tracks_velocity_on_rendered_frames() {
    let actor = Actor {
        shape: ShapeKind::Square,
        color: Color::Red,
        action: Action::MovingLeft,
        x: 40.3,
        y: 30.0,
        size: 5.0,
        vx: -2.0,
        vy: 0.0,
        growth: 0.0,
    };
    let spec = SceneSpec {
        width: 64,
        height: 64,
        frames: 8,
        actors: vec![actor],
        referent: 0,
        seed: 0,
        difficulty: Difficulty::Easy,
    };
    assert_eq!(spec.query(), "red square is moving left");
    let sample = spec.render();
    let t = target_index(8);
    let (x0, y0) = centroid(&color_mask(&sample.frames[0], Color::Red));
    let (xt, yt) = centroid(&color_mask(&sample.frames[t], Color::Red));
    assert!(((x0 - xt) - 2.0 * t as f64).abs() <= 0.5, "{x0} -> {xt}");
    assert!((y0 - yt).abs() <= 0.5);
    assert_eq!(sample.mask, color_mask(&sample.frames[t], Color::Red));
}

fn check_motion(a: &Actor, spec: &SceneSpec) {
    let masks: Vec<BinaryMask> = (0..spec.frames).map(|t| a.mask(spec.width, spec.height, t)).collect();
    let (first, last) = (centroid(&masks[0]), centroid(&masks[spec.frames - 1]));
    let (dx, dy) = (last.0 - first.0, last.1 - first.1);
    let areas: Vec<u64> = masks.iter().map(BinaryMask::count).collect();
    let still = |d: f64| d.abs() < 0.5;
    match a.action {
        Action::MovingLeft => assert!(dx < -1.0 && still(dy), "{a:?}"),
        Action::MovingRight => assert!(dx > 1.0 && still(dy), "{a:?}"),
        Action::MovingUp => assert!(dy < -1.0 && still(dx), "{a:?}"),
        Action::MovingDown => assert!(dy > 1.0 && still(dx), "{a:?}"),
        Action::Growing => assert!(areas.windows(2).all(|w| w[1] >= w[0]) && areas[spec.frames - 1] > areas[0], "{areas:?}"),
        Action::Shrinking => assert!(areas.windows(2).all(|w| w[1] <= w[0]) && areas[spec.frames - 1] < areas[0], "{areas:?}"),
        Action::Still => assert!(still(dx) && still(dy) && areas.windows(2).all(|w| w[0] == w[1])),
    }
}

fn inside(a: &Actor, spec: &SceneSpec) -> bool {
    (0..spec.frames).all(|t| {
        let (x0, y0, x1, y1) = a.bbox(t);
        x0 >= 0.0 && y0 >= 0.0 && x1 <= spec.width as f64 && y1 <= spec.height as f64
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ambiguous_scenes_hold_both_distractors(seed in 0u64..1_000_000) {
        let cfg = GeneratorConfig::default();
        let Ok(spec) = data::generate_scene(seed, Difficulty::Ambiguous, &cfg) else { return Ok(()) };
        prop_assert!(spec.actors.len() >= 3);
        let r = spec.referent().clone();
        let same_look_other_action = spec.actors.iter().enumerate().filter(|(i, a)| *i != spec.referent && (a.shape, a.color) == (r.shape, r.color) && a.action != r.action).count();
        let other_look_same_action = spec.actors.iter().filter(|a| (a.shape, a.color) != (r.shape, r.color) && a.action == r.action).count();
        prop_assert!(same_look_other_action >= 1);
        prop_assert!(other_look_same_action >= 1);
        let matches = spec.actors.iter().filter(|a| (a.shape, a.color, a.action) == (r.shape, r.color, r.action)).count();
        prop_assert_eq!(matches, 1);
        let t = target_index(spec.frames);
        for (i, a) in spec.actors.iter().enumerate() {
            prop_assert!(inside(a, &spec));
            check_motion(a, &spec);
            if i != spec.referent {
                prop_assert_eq!(iou(&a.mask(64, 64, t), &spec.target_mask()).unwrap(), 0.0);
            }
        }
        let (c, s, act) = parse_query(&spec.query()).unwrap();
        prop_assert_eq!((c, s, act), (r.color, r.shape, r.action));
    }

    #[test]
    fn easy_scenes_have_unique_looks(seed in 0u64..1_000_000) {
        let cfg = GeneratorConfig::default();
        let Ok(spec) = data::generate_scene(seed, Difficulty::Easy, &cfg) else { return Ok(()) };
        prop_assert!((1..=2).contains(&spec.actors.len()));
        let r = spec.referent();
        prop_assert_eq!(spec.actors.iter().filter(|a| (a.shape, a.color) == (r.shape, r.color)).count(), 1);
        for a in &spec.actors {
            prop_assert!(inside(a, &spec));
            check_motion(a, &spec);
        }
        prop_assert!(spec.target_mask().count() > 0);
    }

    #[test]
    fn ppm_and_pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>(), rgb in any::<bool>()) {
        use rand::RngExt;
        let mut rng = actorseg_tensor::seeded(seed);
        let c = if rgb { 3 } else { 1 };
        let mut img = Image::new(w, h, c);
        img.data.iter_mut().for_each(|v| *v = rng.random_range(0..=255u8));
        prop_assert_eq!(Image::decode(&img.encode()).unwrap(), img);
    }
}

#[test]
fn samples_round_trip_through_disk() {
    let cfg = GeneratorConfig { width: 32, height: 32, frames: 4 };
    let dir = tempfile::tempdir().unwrap();
    let m = data::write_dataset(dir.path(), 2, 1, 3, Difficulty::Ambiguous, &cfg).unwrap();
    assert_eq!(m.ids(Split::Test).count(), 1);
    let direct = data::generate_split(2, Split::Train, 3, Difficulty::Ambiguous, &cfg).unwrap();
    for (id, s) in m.ids(Split::Train).zip(&direct) {
        let back = data::read_sample(dir.path(), id).unwrap();
        assert_eq!(&back, s);
    }
    assert_eq!(data::Manifest::read(dir.path()).unwrap(), m);
}

#[test]
fn corrupted_files_are_reported() {
    assert!(Image::decode(b"P6\n2 2\n255\n\x00").is_err());
    assert!(Image::decode(b"P3\n1 1\n255\n0 0 0").is_err());
    let dir = tempfile::tempdir().unwrap();
    data::write_dataset(dir.path(), 1, 0, 3, Difficulty::Easy, &GeneratorConfig { width: 16, height: 16, frames: 2 }).unwrap();
    fs::write(dir.path().join("train_0000/mask.pgm"), b"P5\n16 16\n255\n").unwrap();
    assert!(data::read_sample(dir.path(), "train_0000").is_err());
}
