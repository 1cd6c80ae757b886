//! Deterministic synthetic clips of colored shapes with a one-sentence
//! query and the referred actor's mask on the middle frame.
//!
//! # On-disk layout
//!
//! ```text
//! <dir>/manifest.txt     one "<id> <split>" line per sample, split = train | test
//! <dir>/vocab.txt        query vocabulary, one token per line
//! <dir>/<id>/frame_00.ppm .. frame_<T-1>.ppm   P6, 8-bit RGB
//! <dir>/<id>/mask.pgm    P5, 0 = background, 255 = referred actor
//! <dir>/<id>/query.txt   the query, one UTF-8 line
//! <dir>/<id>/spec.txt    scene description as key=value lines
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use actorseg_tensor::{seeded, SeededRng, Tensor};
use rand::RngExt;

use crate::error::{ModelError, Result};
use crate::metrics::BinaryMask;
use crate::pnm::Image;
use crate::text::Vocabulary;
use crate::visual::target_index;

/// Rejection-sampling budget per actor.
pub const PLACEMENT_ATTEMPTS: usize = 100;

macro_rules! named_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $ty { $($variant),+ }

        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self> {
                Self::ALL.iter().copied().find(|v| v.name() == s).ok_or_else(|| {
                    ModelError::Validation(format!(concat!("unknown ", stringify!($ty), " {:?}"), s))
                })
            }
        }
    };
}

named_enum!(ShapeKind { Circle => "circle", Square => "square", Triangle => "triangle" });
named_enum!(Color { Red => "red", Green => "green", Blue => "blue", White => "white" });
named_enum!(Action {
    MovingLeft => "moving_left",
    MovingRight => "moving_right",
    MovingUp => "moving_up",
    MovingDown => "moving_down",
    Growing => "growing",
    Shrinking => "shrinking",
    Still => "still",
});
named_enum!(Difficulty { Easy => "easy", Ambiguous => "ambiguous" });

impl Color {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [255, 0, 0],
            Color::Green => [0, 255, 0],
            Color::Blue => [0, 0, 255],
            Color::White => [255, 255, 255],
        }
    }
}

impl Action {
    /// Words used in queries.
    pub fn phrase(self) -> &'static str {
        match self {
            Action::MovingLeft => "moving left",
            Action::MovingRight => "moving right",
            Action::MovingUp => "moving up",
            Action::MovingDown => "moving down",
            Action::Growing => "growing",
            Action::Shrinking => "shrinking",
            Action::Still => "still",
        }
    }
}

/// The closed query vocabulary.
pub fn vocabulary() -> Vocabulary {
    let words = Color::ALL
        .iter()
        .map(|c| c.name())
        .chain(ShapeKind::ALL.iter().map(|s| s.name()))
        .chain(["is", "moving", "left", "right", "up", "down", "growing", "shrinking", "still"]);
    Vocabulary::new(words).expect("generator vocabulary is valid")
}

pub fn query_text(color: Color, shape: ShapeKind, action: Action) -> String {
    format!("{color} {shape} is {}", action.phrase())
}

/// Inverse of [`query_text`].
pub fn parse_query(text: &str) -> Result<(Color, ShapeKind, Action)> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let bad = || ModelError::Validation(format!("query {text:?} does not follow the generator grammar"));
    if words.len() < 4 || words[2] != "is" {
        return Err(bad());
    }
    let color = words[0].parse().map_err(|_| bad())?;
    let shape = words[1].parse().map_err(|_| bad())?;
    let phrase = words[3..].join(" ");
    let action = Action::ALL.iter().copied().find(|a| a.phrase() == phrase).ok_or_else(bad)?;
    Ok((color, shape, action))
}

/// One actor; positions are pixel coordinates of the shape center at frame
/// 0, `size` is the half-extent in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    pub shape: ShapeKind,
    pub color: Color,
    pub action: Action,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub vx: f64,
    pub vy: f64,
    pub growth: f64,
}

impl Actor {
    pub fn center(&self, t: usize) -> (f64, f64) {
        (self.x + self.vx * t as f64, self.y + self.vy * t as f64)
    }

    pub fn size_at(&self, t: usize) -> f64 {
        self.size + self.growth * t as f64
    }

    /// `(x0, y0, x1, y1)` bounding box at frame `t`.
    pub fn bbox(&self, t: usize) -> (f64, f64, f64, f64) {
        let (cx, cy) = self.center(t);
        let s = self.size_at(t);
        (cx - s, cy - s, cx + s, cy + s)
    }

    /// Whether the point `(px, py)` lies inside the shape at frame `t`.
    pub fn covers(&self, px: f64, py: f64, t: usize) -> bool {
        let (cx, cy) = self.center(t);
        let s = self.size_at(t);
        let (dx, dy) = (px - cx, py - cy);
        match self.shape {
            ShapeKind::Square => dx.abs() <= s && dy.abs() <= s,
            ShapeKind::Circle => dx * dx + dy * dy <= s * s,
            // apex up, base on the bottom edge of the box
            ShapeKind::Triangle => dy.abs() <= s && dx.abs() <= (dy + s) / 2.0,
        }
    }

    /// Hard-edged rasterization: a pixel is on when its center is covered.
    pub fn mask(&self, width: usize, height: usize, t: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(width, height);
        let (x0, y0, x1, y1) = self.bbox(t);
        let rows = (y0.floor().max(0.0) as usize)..((y1.ceil().max(0.0) as usize).min(height));
        for i in rows {
            for j in (x0.floor().max(0.0) as usize)..((x1.ceil().max(0.0) as usize).min(width)) {
                if self.covers(j as f64 + 0.5, i as f64 + 0.5, t) {
                    m.data[i * width + j] = true;
                }
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub actors: Vec<Actor>,
    pub referent: usize,
    pub seed: u64,
    pub difficulty: Difficulty,
}

impl SceneSpec {
    pub fn referent(&self) -> &Actor {
        &self.actors[self.referent]
    }

    pub fn query(&self) -> String {
        let r = self.referent();
        query_text(r.color, r.shape, r.action)
    }

    pub fn render_frame(&self, t: usize) -> Image {
        let mut img = Image::new(self.width, self.height, 3);
        for a in &self.actors {
            let m = a.mask(self.width, self.height, t);
            let rgb = a.color.rgb();
            for (p, &on) in m.data.iter().enumerate() {
                if on {
                    img.data[3 * p..3 * p + 3].copy_from_slice(&rgb);
                }
            }
        }
        img
    }

    pub fn target_mask(&self) -> BinaryMask {
        self.referent().mask(self.width, self.height, target_index(self.frames))
    }

    pub fn render(&self) -> VideoSample {
        VideoSample {
            frames: (0..self.frames).map(|t| self.render_frame(t)).collect(),
            query: self.query(),
            mask: self.target_mask(),
            spec: self.clone(),
        }
    }

    /// `key=value` lines; floats use the shortest exact representation so the
    /// text parses back to identical values.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "seed={}\ndifficulty={}\nwidth={}\nheight={}\nframes={}\nreferent={}\nactors={}\n",
            self.seed,
            self.difficulty,
            self.width,
            self.height,
            self.frames,
            self.referent,
            self.actors.len()
        );
        for (k, a) in self.actors.iter().enumerate() {
            s += &format!(
                "actor{k}.shape={}\nactor{k}.color={}\nactor{k}.action={}\nactor{k}.x={:?}\nactor{k}.y={:?}\n\
                 actor{k}.size={:?}\nactor{k}.vx={:?}\nactor{k}.vy={:?}\nactor{k}.growth={:?}\n",
                a.shape, a.color, a.action, a.x, a.y, a.size, a.vx, a.vy, a.growth
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::Validation(format!("spec line {line:?} is not key=value")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
            let raw = kv
                .get(key)
                .ok_or_else(|| ModelError::Validation(format!("spec is missing {key}")))?;
            raw.parse()
                .map_err(|_| ModelError::Validation(format!("spec value {key}={raw:?} is invalid")))
        }
        let n: usize = get(&kv, "actors")?;
        let mut actors = Vec::with_capacity(n);
        for k in 0..n {
            let f = |name: &str| format!("actor{k}.{name}");
            actors.push(Actor {
                shape: get(&kv, &f("shape"))?,
                color: get(&kv, &f("color"))?,
                action: get(&kv, &f("action"))?,
                x: get(&kv, &f("x"))?,
                y: get(&kv, &f("y"))?,
                size: get(&kv, &f("size"))?,
                vx: get(&kv, &f("vx"))?,
                vy: get(&kv, &f("vy"))?,
                growth: get(&kv, &f("growth"))?,
            });
        }
        let spec = Self {
            width: get(&kv, "width")?,
            height: get(&kv, "height")?,
            frames: get(&kv, "frames")?,
            actors,
            referent: get(&kv, "referent")?,
            seed: get(&kv, "seed")?,
            difficulty: get(&kv, "difficulty")?,
        };
        if spec.referent >= spec.actors.len() {
            return Err(ModelError::Validation("spec referent index out of range".into()));
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoSample {
    pub frames: Vec<Image>,
    pub query: String,
    pub mask: BinaryMask,
    pub spec: SceneSpec,
}

impl VideoSample {
    /// `T×H×W×3` clip with samples scaled to [0, 1].
    pub fn clip_tensor(&self) -> Tensor {
        let (t, h, w) = (self.frames.len(), self.spec.height, self.spec.width);
        let data = self.frames.iter().flat_map(|f| f.data.iter().map(|&v| v as f64 / 255.0)).collect();
        Tensor::new(data, &[t, h, w, 3]).expect("frames match the spec")
    }

    pub fn mask_tensor(&self) -> Tensor {
        Tensor::new(self.mask.to_values(), &[self.mask.height, self.mask.width]).expect("mask size")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 8,
        }
    }
}

struct Placer<'a> {
    cfg: &'a GeneratorConfig,
    rng: SeededRng,
    placed: Vec<Actor>,
}

impl Placer<'_> {
    fn unit(&mut self) -> f64 {
        self.rng.random_range(0.0..1.0)
    }

    fn span(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn fits(&self, a: &Actor) -> bool {
        let (w, h) = (self.cfg.width as f64, self.cfg.height as f64);
        let last = self.cfg.frames - 1;
        // motion and growth are linear, so the end frames bound the path
        let inside = [0, last].iter().all(|&t| {
            let (x0, y0, x1, y1) = a.bbox(t);
            x0 >= 0.0 && y0 >= 0.0 && x1 <= w && y1 <= h && a.size_at(t) >= 1.5
        });
        inside
            && (0..self.cfg.frames).all(|t| {
                let (ax0, ay0, ax1, ay1) = a.bbox(t);
                self.placed.iter().all(|b| {
                    let (bx0, by0, bx1, by1) = b.bbox(t);
                    ax1 + 1.0 <= bx0 || bx1 + 1.0 <= ax0 || ay1 + 1.0 <= by0 || by1 + 1.0 <= ay0
                })
            })
    }

    fn propose(&mut self, shape: ShapeKind, color: Color, action: Action) -> Actor {
        let s = self.cfg.width.min(self.cfg.height) as f64;
        let speed = self.span(s / 40.0, s / 24.0);
        let rate = s / 128.0;
        let (size, growth) = match action {
            Action::Growing => (self.span(s / 16.0, s / 10.0), rate),
            Action::Shrinking => (self.span(s / 10.0, s / 7.0), -rate),
            _ => (self.span(s / 12.0, s / 8.0), 0.0),
        };
        let (vx, vy) = match action {
            Action::MovingLeft => (-speed, 0.0),
            Action::MovingRight => (speed, 0.0),
            Action::MovingUp => (0.0, -speed),
            Action::MovingDown => (0.0, speed),
            _ => (0.0, 0.0),
        };
        let x = self.span(0.0, self.cfg.width as f64);
        let y = self.span(0.0, self.cfg.height as f64);
        Actor {
            shape,
            color,
            action,
            x,
            y,
            size,
            vx,
            vy,
            growth,
        }
    }

    fn place(&mut self, shape: ShapeKind, color: Color, action: Action) -> Result<()> {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let a = self.propose(shape, color, action);
            if self.fits(&a) {
                self.placed.push(a);
                return Ok(());
            }
        }
        Err(ModelError::Generation(format!(
            "could not place a {color} {shape} after {PLACEMENT_ATTEMPTS} attempts"
        )))
    }

    fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.rng.random_range(0..items.len())]
    }

    fn appearance(&mut self) -> (ShapeKind, Color) {
        (self.pick(ShapeKind::ALL), self.pick(Color::ALL))
    }
}

/// Builds one scene. `easy` places one or two actors with distinct
/// appearance; `ambiguous` places the referent, a same-looking actor with a
/// different action and a different-looking actor with the same action.
pub fn generate_scene(seed: u64, difficulty: Difficulty, cfg: &GeneratorConfig) -> Result<SceneSpec> {
    if cfg.frames < 2 || cfg.width < 16 || cfg.height < 16 {
        return Err(ModelError::Validation(format!("generator canvas {cfg:?} is too small")));
    }
    let mut p = Placer {
        cfg,
        rng: seeded(seed),
        placed: Vec::new(),
    };
    let (shape, color) = p.appearance();
    let action = p.pick(Action::ALL);
    let referent;
    match difficulty {
        Difficulty::Easy => {
            let n = p.rng.random_range(1..=2usize);
            let mut looks = vec![(shape, color, action)];
            while looks.len() < n {
                let (s, c) = p.appearance();
                if looks.iter().all(|&(ls, lc, _)| (ls, lc) != (s, c)) {
                    let a = p.pick(Action::ALL);
                    looks.push((s, c, a));
                }
            }
            for &(s, c, a) in &looks {
                p.place(s, c, a)?;
            }
            referent = p.rng.random_range(0..n);
        }
        Difficulty::Ambiguous => {
            let other_actions: Vec<Action> = Action::ALL.iter().copied().filter(|&a| a != action).collect();
            let twin_action = p.pick(&other_actions);
            let other_look = loop {
                let look = p.appearance();
                if look != (shape, color) {
                    break look;
                }
            };
            p.place(shape, color, action)?;
            p.place(shape, color, twin_action)?;
            p.place(other_look.0, other_look.1, action)?;
            // shuffle so the referent is not always first
            let k = p.rng.random_range(0..3usize);
            p.placed.rotate_left(k);
            referent = (3 - k) % 3;
        }
    }
    let spec = SceneSpec {
        width: cfg.width,
        height: cfg.height,
        frames: cfg.frames,
        actors: p.placed,
        referent,
        seed,
        difficulty,
    };
    Ok(spec)
}

pub fn generate_sample(seed: u64, difficulty: Difficulty, cfg: &GeneratorConfig) -> Result<VideoSample> {
    Ok(generate_scene(seed, difficulty, cfg)?.render())
}

/// Tries `seed`, `seed + 1`, … until placement succeeds.
pub fn generate_with_retry(seed: u64, difficulty: Difficulty, cfg: &GeneratorConfig) -> Result<VideoSample> {
    let mut last = None;
    for k in 0..1000 {
        match generate_sample(seed.wrapping_add(k), difficulty, cfg) {
            Ok(s) => return Ok(s),
            Err(e @ ModelError::Generation(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(ModelError::Validation(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<(String, Split)>,
}

impl Manifest {
    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(move |(_, s)| *s == split).map(|(id, _)| id.as_str())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = fs::read_to_string(&path).map_err(|e| ModelError::io(&path, e))?;
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(id), Some(split), None) => entries.push((id.to_string(), split.parse()?)),
                _ => return Err(ModelError::format(&path, format!("bad manifest line {line:?}"))),
            }
        }
        Ok(Self { entries })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.txt");
        let text: String = self.entries.iter().map(|(id, s)| format!("{id} {}\n", s.name())).collect();
        fs::write(&path, text).map_err(|e| ModelError::io(&path, e))
    }
}

/// Seed the `k`-th sample of `split` starts its search from. The test
/// range begins far above any train seed.
pub fn sample_seed(base: u64, split: Split, k: usize) -> u64 {
    let offset = match split {
        Split::Train => 0,
        Split::Test => 1 << 40,
    };
    base.wrapping_add(offset).wrapping_add(k as u64 * 1000)
}

pub fn write_sample(dir: &Path, id: &str, sample: &VideoSample) -> Result<()> {
    let sdir = dir.join(id);
    fs::create_dir_all(&sdir).map_err(|e| ModelError::io(&sdir, e))?;
    for (t, f) in sample.frames.iter().enumerate() {
        f.write(&sdir.join(format!("frame_{t:02}.ppm")))?;
    }
    sample.mask.to_image().write(&sdir.join("mask.pgm"))?;
    let q = sdir.join("query.txt");
    fs::write(&q, format!("{}\n", sample.query)).map_err(|e| ModelError::io(&q, e))?;
    let s = sdir.join("spec.txt");
    fs::write(&s, sample.spec.to_text()).map_err(|e| ModelError::io(&s, e))
}

pub fn read_sample(dir: &Path, id: &str) -> Result<VideoSample> {
    let sdir = dir.join(id);
    let spec_path = sdir.join("spec.txt");
    let text = fs::read_to_string(&spec_path).map_err(|e| ModelError::io(&spec_path, e))?;
    let spec = SceneSpec::parse(&text).map_err(|e| ModelError::format(&spec_path, e.to_string()))?;
    let mut frames = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let path = sdir.join(format!("frame_{t:02}.ppm"));
        let img = Image::read(&path)?;
        if (img.width, img.height, img.channels) != (spec.width, spec.height, 3) {
            return Err(ModelError::format(&path, "frame size does not match spec.txt"));
        }
        frames.push(img);
    }
    let mask_path = sdir.join("mask.pgm");
    let mask = BinaryMask::from_image(&Image::read(&mask_path)?).map_err(|e| ModelError::format(&mask_path, e.to_string()))?;
    if (mask.width, mask.height) != (spec.width, spec.height) {
        return Err(ModelError::format(&mask_path, "mask size does not match spec.txt"));
    }
    let q = sdir.join("query.txt");
    let query = fs::read_to_string(&q).map_err(|e| ModelError::io(&q, e))?.trim_end().to_string();
    Ok(VideoSample {
        frames,
        query,
        mask,
        spec,
    })
}

/// Generates and writes `n_train + n_test` samples plus the manifest and
/// vocabulary file.
pub fn write_dataset(
    dir: &Path,
    n_train: usize,
    n_test: usize,
    base_seed: u64,
    difficulty: Difficulty,
    cfg: &GeneratorConfig,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
    let mut entries = Vec::with_capacity(n_train + n_test);
    for (split, n) in [(Split::Train, n_train), (Split::Test, n_test)] {
        for k in 0..n {
            let sample = generate_with_retry(sample_seed(base_seed, split, k), difficulty, cfg)?;
            let id = format!("{}_{k:04}", split.name());
            write_sample(dir, &id, &sample)?;
            entries.push((id, split));
        }
    }
    let manifest = Manifest { entries };
    manifest.write(dir)?;
    vocabulary().write(&dir.join("vocab.txt"))?;
    Ok(manifest)
}

/// Generates the same samples as [`write_dataset`] without touching disk.
pub fn generate_split(n: usize, split: Split, base_seed: u64, difficulty: Difficulty, cfg: &GeneratorConfig) -> Result<Vec<VideoSample>> {
    (0..n)
        .map(|k| generate_with_retry(sample_seed(base_seed, split, k), difficulty, cfg))
        .collect()
}
