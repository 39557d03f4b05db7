//! Deterministic synthetic scenes: planar depth, Gaussian attention blobs and
//! the planted boxes as ground truth.
//!
//! Randomness comes from SplitMix64 (Steele, Lea & Flood constants) so that
//! fixtures can be regenerated bit-for-bit in any language:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! return z ^ (z >> 31)
//! ```
//!
//! Uniforms are `(next >> 11) * 2^-53`. Normals use one Box-Muller draw per
//! pair of uniforms: `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::raster::Raster;
use crate::store::pfm::write_pfm;
use crate::store::voc::{write_voc_xml, GroundTruth, GtObject};

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer in `[lo, hi]`.
    pub fn int(&mut self, lo: i32, hi: i32) -> i32 {
        lo + (self.uniform() * (hi - lo + 1) as f64).floor() as i32
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Rect,
    /// Ellipse inscribed in the part's box.
    Ellipse,
}

/// A planar patch of an object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectPart {
    pub shape: Shape,
    pub bbox: BBox,
    pub depth_plane: f64,
}

/// A planted object. Most objects have one part; "deep" objects use several
/// parts at different depth planes and are annotated by their union box.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub parts: Vec<ObjectPart>,
    pub attention_gain: f64,
    pub label: String,
}

impl SceneObject {
    pub fn simple(shape: Shape, bbox: BBox, depth_plane: f64, attention_gain: f64) -> Self {
        Self {
            parts: vec![ObjectPart {
                shape,
                bbox,
                depth_plane,
            }],
            attention_gain,
            label: "object".into(),
        }
    }

    pub fn bbox(&self) -> BBox {
        self.parts
            .iter()
            .map(|p| p.bbox)
            .reduce(|a, b| a.union_box(&b))
            .expect("objects have at least one part")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<SceneObject>,
    pub background_depth: f64,
    pub noise_sigma: f64,
    pub head_count: usize,
    /// Amplitude of the uniform noise added to every attention head.
    pub attention_noise: f64,
}

impl SceneSpec {
    pub fn new(seed: u64, width: usize, height: usize) -> Self {
        Self {
            seed,
            width,
            height,
            objects: Vec::new(),
            background_depth: 0.1,
            noise_sigma: 0.0,
            head_count: 6,
            attention_noise: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.head_count == 0 {
            return Err(Error::contract("scene needs positive size and head count"));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.parts.is_empty() {
                return Err(Error::contract(format!("object {i} has no parts")));
            }
            for p in &o.parts {
                let b = p.bbox;
                if b.xmin < 0
                    || b.ymin < 0
                    || b.xmax as usize > self.width
                    || b.ymax as usize > self.height
                {
                    return Err(Error::contract(format!("object {i} outside the image")));
                }
                if !(0.0..=1.0).contains(&p.depth_plane) {
                    return Err(Error::contract(format!("object {i} depth outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub depth: Raster,
    pub heads: Vec<Raster>,
    pub ground_truth: GroundTruth,
    pub warnings: Vec<String>,
}

fn inside(shape: Shape, b: &BBox, x: usize, y: usize) -> bool {
    let (xi, yi) = (x as i32, y as i32);
    if xi < b.xmin || xi >= b.xmax || yi < b.ymin || yi >= b.ymax {
        return false;
    }
    match shape {
        Shape::Rect => true,
        Shape::Ellipse => {
            let (rx, ry) = (b.width() as f64 / 2.0, b.height() as f64 / 2.0);
            let dx = (x as f64 + 0.5 - (b.xmin as f64 + rx)) / rx;
            let dy = (y as f64 + 0.5 - (b.ymin as f64 + ry)) / ry;
            dx * dx + dy * dy <= 1.0
        }
    }
}

/// Renders a scene. Nearer parts are painted last and occlude farther ones.
pub fn generate_scene(spec: &SceneSpec, stem: &str) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = SplitMix64::new(spec.seed);

    let mut warnings = Vec::new();
    for (i, a) in spec.objects.iter().enumerate() {
        for (j, b) in spec.objects.iter().enumerate().skip(i + 1) {
            let clash = a.parts.iter().any(|pa| {
                b.parts.iter().any(|pb| {
                    (pa.depth_plane - pb.depth_plane).abs() < 1e-9
                        && pa.bbox.intersection_area(&pb.bbox) > 0
                })
            });
            if clash {
                warnings.push(format!(
                    "objects {i} and {j} overlap on the same depth plane"
                ));
            }
        }
    }

    let mut parts: Vec<&ObjectPart> = spec.objects.iter().flat_map(|o| &o.parts).collect();
    parts.sort_by(|a, b| a.depth_plane.total_cmp(&b.depth_plane));
    let mut depth = Raster::filled(w, h, spec.background_depth as f32);
    for p in parts {
        for y in p.bbox.ymin as usize..p.bbox.ymax as usize {
            for x in p.bbox.xmin as usize..p.bbox.xmax as usize {
                if inside(p.shape, &p.bbox, x, y) {
                    depth.set(x, y, p.depth_plane as f32);
                }
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        for v in depth.data_mut() {
            *v = (*v as f64 + spec.noise_sigma * rng.normal()).clamp(0.0, 1.0) as f32;
        }
    }

    let mut heads = vec![Raster::zeros(w, h); spec.head_count];
    for (k, obj) in spec.objects.iter().enumerate() {
        let b = obj.bbox();
        let (cx, cy) = (
            (b.xmin + b.xmax) as f64 / 2.0,
            (b.ymin + b.ymax) as f64 / 2.0,
        );
        let (sx, sy) = (0.6 * b.width() as f64, 0.6 * b.height() as f64);
        let head = &mut heads[k % spec.head_count];
        for y in 0..h {
            for x in 0..w {
                let dx = (x as f64 + 0.5 - cx) / sx;
                let dy = (y as f64 + 0.5 - cy) / sy;
                let v = (obj.attention_gain * (-(dx * dx + dy * dy) / 2.0).exp()) as f32;
                if v > head.get(x, y) {
                    head.set(x, y, v);
                }
            }
        }
    }
    for head in &mut heads {
        for v in head.data_mut() {
            *v += (spec.attention_noise * rng.uniform()) as f32;
        }
    }

    let ground_truth = GroundTruth {
        stem: stem.to_string(),
        image_width: w as u32,
        image_height: h as u32,
        objects: spec
            .objects
            .iter()
            .map(|o| GtObject {
                bbox: o.bbox(),
                label: o.label.clone(),
                difficult: false,
            })
            .collect(),
    };
    Ok(Scene {
        depth,
        heads,
        ground_truth,
        warnings,
    })
}

/// Scene families produced by [`generate_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    /// Isolated objects and depth-separated occlusion pairs.
    Standard,
    /// One object per scene built from two planes a short depth step apart.
    Deep,
}

impl std::str::FromStr for SuiteKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "deep" => Ok(Self::Deep),
            _ => Err(Error::Config(format!("unknown suite kind {s:?}"))),
        }
    }
}

pub const SUITE_SIZE: usize = 96;

fn rect(x: i32, y: i32, w: i32, h: i32) -> BBox {
    BBox::new(x, y, x + w, y + h).expect("positive size")
}

/// Layout for scene `index` of a standard suite. Every depth plane claims
/// roughly a fifth of the image or more so it shows up as a histogram peak.
fn standard_layout(rng: &mut SplitMix64, index: usize) -> Vec<SceneObject> {
    let s = SUITE_SIZE as i32;
    let gain = |rng: &mut SplitMix64| rng.range(0.8, 1.0);
    match index % 4 {
        // one large object
        0 => {
            let (w, h) = (rng.int(54, 66), rng.int(54, 66));
            let (x, y) = (rng.int(4, s - w - 4), rng.int(4, s - h - 4));
            let shape = if rng.uniform() < 0.5 {
                Shape::Rect
            } else {
                Shape::Ellipse
            };
            vec![SceneObject::simple(
                shape,
                rect(x, y, w, h),
                rng.range(0.55, 0.9),
                gain(rng),
            )]
        }
        // two isolated objects at different depths
        1 => {
            let (w1, w2) = (rng.int(40, 44), rng.int(40, 44));
            let (h1, h2) = (rng.int(56, 70), rng.int(56, 70));
            let x1 = rng.int(2, 4);
            let x2 = rng.int(x1 + w1 + 3, s - w2 - 1);
            let far = rng.range(0.45, 0.6);
            let near = far + rng.range(0.2, 0.3);
            vec![
                SceneObject::simple(
                    Shape::Rect,
                    rect(x1, rng.int(2, s - h1 - 2), w1, h1),
                    far,
                    gain(rng),
                ),
                SceneObject::simple(
                    Shape::Rect,
                    rect(x2, rng.int(2, s - h2 - 2), w2, h2),
                    near,
                    gain(rng),
                ),
            ]
        }
        // occlusion pair: a near object covers one corner of a far one
        2 => {
            let fw = rng.int(56, 60);
            let (fx, fy) = (rng.int(2, 4), rng.int(2, 4));
            let nw = rng.int(46, 48);
            let overlap = rng.int(12, 16);
            let (nx, ny) = (fx + fw - overlap, fy + fw - overlap);
            let nw = nw.min(s - nx).min(s - ny);
            vec![
                SceneObject::simple(
                    Shape::Rect,
                    rect(fx, fy, fw, fw),
                    rng.range(0.45, 0.55),
                    gain(rng),
                ),
                SceneObject::simple(
                    Shape::Rect,
                    rect(nx, ny, nw, nw),
                    rng.range(0.8, 0.9),
                    gain(rng),
                ),
            ]
        }
        // two isolated objects sharing a depth plane
        _ => {
            let (w1, w2) = (rng.int(40, 44), rng.int(40, 44));
            let (h1, h2) = (rng.int(56, 70), rng.int(56, 70));
            let x1 = rng.int(2, 4);
            let x2 = rng.int(x1 + w1 + 3, s - w2 - 1);
            let plane = rng.range(0.6, 0.9);
            vec![
                SceneObject::simple(
                    Shape::Rect,
                    rect(x1, rng.int(2, s - h1 - 2), w1, h1),
                    plane,
                    gain(rng),
                ),
                SceneObject::simple(
                    Shape::Rect,
                    rect(x2, rng.int(2, s - h2 - 2), w2, h2),
                    plane,
                    gain(rng),
                ),
            ]
        }
    }
}

/// One object made of two overlapping square parts along a diagonal, the
/// lower-right part a short step nearer than the upper-left one. Each part's
/// box alone overlaps the union box at IoU ~0.36.
fn deep_layout(rng: &mut SplitMix64) -> Vec<SceneObject> {
    let s = SUITE_SIZE as i32;
    let part = rng.int(46, 50);
    let step = part * 2 / 3;
    let (x, y) = (
        rng.int(2, s - part - step - 2),
        rng.int(2, s - part - step - 2),
    );
    let near = rng.range(0.85, 0.9);
    let back = near - rng.range(0.1, 0.12);
    vec![SceneObject {
        parts: vec![
            ObjectPart {
                shape: Shape::Rect,
                bbox: rect(x, y, part, part),
                depth_plane: back,
            },
            ObjectPart {
                shape: Shape::Rect,
                bbox: rect(x + step, y + step, part, part),
                depth_plane: near,
            },
        ],
        attention_gain: rng.range(0.8, 1.0),
        label: "deep".into(),
    }]
}

/// Scene specs of a suite, deterministic in `(n_scenes, seed, kind, noise)`.
pub fn suite_specs(
    n_scenes: usize,
    seed: u64,
    kind: SuiteKind,
    noise_sigma: f64,
) -> Vec<(String, SceneSpec)> {
    let mut rng = SplitMix64::new(seed);
    (0..n_scenes)
        .map(|i| {
            let objects = match kind {
                SuiteKind::Standard => standard_layout(&mut rng, i),
                SuiteKind::Deep => deep_layout(&mut rng),
            };
            let mut spec = SceneSpec::new(rng.next_u64(), SUITE_SIZE, SUITE_SIZE);
            spec.objects = objects;
            spec.noise_sigma = noise_sigma;
            (format!("scene_{i:04}"), spec)
        })
        .collect()
}

/// Writes a suite in the dataset directory convention and returns the stems.
pub fn generate_suite(
    n_scenes: usize,
    seed: u64,
    kind: SuiteKind,
    noise_sigma: f64,
    out_dir: &Path,
) -> Result<Vec<String>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let specs = suite_specs(n_scenes, seed, kind, noise_sigma);
    let written = crate::par::map(&specs, |(stem, spec)| -> Result<String> {
        let scene = generate_scene(spec, stem)?;
        for w in &scene.warnings {
            log::warn!("{stem}: {w}");
        }
        write_pfm(&scene.depth, out_dir.join(format!("{stem}.depth.pfm")))?;
        for (k, head) in scene.heads.iter().enumerate() {
            write_pfm(head, out_dir.join(format!("{stem}.att.h{k}.pfm")))?;
        }
        write_voc_xml(&scene.ground_truth, out_dir.join(format!("{stem}.ann.xml")))?;
        Ok(stem.clone())
    });
    written.into_iter().collect()
}
