//! Ground-truth-backed stand-ins for the foundation models, plus the
//! synthetic scene generator used to exercise the pipelines end to end.
//!
//! Every oracle is a pure function of its ground truth, its inputs and its
//! seed, so repeated calls are bit-identical.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClickSuggester, ProbabilityProvider, ProposalProvider, Region, Segmenter};
use crate::clicks::{serialize_clicks_text, ClickSet};
use crate::contrastive::{dominant_class, ProposalSet};
use crate::error::{Error, Result};
use crate::eval::{ManifestRecord, Task};
use crate::io::{write_label_map, write_mask, write_rgb};
use crate::raster::{
    connected_components, distance_transform, erode4, is_boundary_pixel, BinaryMask, LabelMap,
    ProbabilityMap, Rect,
};
use crate::tiling::scaled_size;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleBehavior {
    /// Returns the clicked ground-truth components exactly.
    #[default]
    Ideal,
    /// Like `Ideal`, but erodes each returned component by one pixel unless
    /// one of its positive clicks sits on the component boundary.
    Erode1,
}

impl std::str::FromStr for OracleBehavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Self::Ideal),
            "erode1" => Ok(Self::Erode1),
            other => Err(Error::Config(format!("unknown oracle behavior {other:?}"))),
        }
    }
}

fn segment_components(
    components: &[BinaryMask],
    dims: (u32, u32),
    clicks: &ClickSet,
    behavior: OracleBehavior,
) -> Result<BinaryMask> {
    clicks.check_bounds(dims.0, dims.1)?;
    let mut out = BinaryMask::new(dims.0, dims.1)?;
    for comp in components {
        let hits: Vec<_> = clicks.positives().iter().filter(|c| comp.get(c.x, c.y)).collect();
        if hits.is_empty() || clicks.negatives().iter().any(|c| comp.get(c.x, c.y)) {
            continue;
        }
        let piece = match behavior {
            OracleBehavior::Ideal => comp.clone(),
            OracleBehavior::Erode1 if hits.iter().any(|c| is_boundary_pixel(comp, c.x, c.y)) => comp.clone(),
            OracleBehavior::Erode1 => erode4(comp),
        };
        out = out.union(&piece)?;
    }
    Ok(out)
}

/// Test double for click-promptable segmentation over a binary ground truth.
///
/// Components are 4-connected. A component is returned when it holds at least
/// one positive click and no negative click.
pub fn oracle_segment(gt: &BinaryMask, clicks: &ClickSet, behavior: OracleBehavior) -> Result<BinaryMask> {
    segment_components(&connected_components(gt), gt.dims(), clicks, behavior)
}

/// Same as [`oracle_segment`] over a label map: components are taken per
/// non-background class.
pub fn oracle_segment_labels(gt: &LabelMap, clicks: &ClickSet, behavior: OracleBehavior) -> Result<BinaryMask> {
    segment_components(&label_components(gt), gt.dims(), clicks, behavior)
}

fn label_components(gt: &LabelMap) -> Vec<BinaryMask> {
    (0..gt.class_count())
        .filter(|&c| c != gt.background())
        .flat_map(|c| connected_components(&gt.class_mask(c)))
        .collect()
}

pub struct OracleSegmenter {
    components: Vec<BinaryMask>,
    dims: (u32, u32),
    behavior: OracleBehavior,
}

impl OracleSegmenter {
    pub fn new(gt: BinaryMask, behavior: OracleBehavior) -> Self {
        Self {
            components: connected_components(&gt),
            dims: gt.dims(),
            behavior,
        }
    }

    pub fn from_labels(gt: &LabelMap, behavior: OracleBehavior) -> Self {
        Self {
            components: label_components(gt),
            dims: gt.dims(),
            behavior,
        }
    }
}

impl Segmenter for OracleSegmenter {
    fn segment(&self, image: &RgbImage, clicks: &ClickSet) -> Result<BinaryMask> {
        if image.dimensions() != self.dims {
            return Err(Error::dims(self.dims, image.dimensions()));
        }
        segment_components(&self.components, self.dims, clicks, self.behavior)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn pixel_noise(seed: u64, class: u32, x: u32, y: u32) -> f32 {
    let h = splitmix(seed ^ splitmix(((class as u64) << 48) ^ ((x as u64) << 24) ^ y as u64));
    (h >> 40) as f32 / (1u64 << 24) as f32
}

fn noisy_indicator(inside: bool, noise: f32, seed: u64, class: u32, x: u32, y: u32) -> f32 {
    let base = if inside { 1.0 } else { 0.0 };
    if noise <= 0.0 {
        return base;
    }
    ((1.0 - noise) * base + noise * pixel_noise(seed, class, x, y)).clamp(0.0, 1.0)
}

#[inline]
fn nearest(dst: u32, dst_len: u32, src_len: u32) -> u32 {
    ((((2 * dst as u64 + 1) * src_len as u64) / (2 * dst_len as u64)) as u32).min(src_len - 1)
}

/// Probability maps that are (optionally noisy) class indicators of the
/// ground truth, sampled at whatever frame the request implies.
pub struct OracleProbability {
    gt: LabelMap,
    noise: f32,
    seed: u64,
}

impl OracleProbability {
    pub fn new(gt: LabelMap, noise: f32, seed: u64) -> Self {
        Self { gt, noise, seed }
    }
}

impl ProbabilityProvider for OracleProbability {
    fn probability_maps(
        &self,
        image: &RgbImage,
        classes: &[String],
        long_side: u32,
        region: Option<&Region>,
    ) -> Result<Vec<ProbabilityMap>> {
        if classes.len() != self.gt.class_count() as usize {
            return Err(Error::CountMismatch {
                what: "classes",
                expected: self.gt.class_count() as usize,
                actual: classes.len(),
            });
        }
        let (gw, gh) = self.gt.dims();
        let (frame, rect) = match region {
            Some(r) => ((r.frame_w, r.frame_h), r.rect),
            None => {
                let (fw, fh) = scaled_size(image.width(), image.height(), long_side);
                ((fw, fh), Rect::new(0, 0, fw, fh))
            }
        };
        (0..classes.len() as u32)
            .map(|class| {
                ProbabilityMap::from_fn(rect.w, rect.h, |x, y| {
                    let sx = nearest(rect.x + x, frame.0, gw);
                    let sy = nearest(rect.y + y, frame.1, gh);
                    noisy_indicator(self.gt.get(sx, sy) == class, self.noise, self.seed, class, sx, sy)
                })
            })
            .collect()
    }
}

fn crop_labels(gt: &LabelMap, rect: Rect) -> Result<LabelMap> {
    let mut v = Vec::with_capacity(rect.area() as usize);
    for y in rect.y..rect.bottom() {
        for x in rect.x..rect.right() {
            v.push(gt.get(x, y));
        }
    }
    LabelMap::new(rect.w, rect.h, v, gt.class_count(), gt.background())
}

/// Random rectangles whose dominant ground-truth class is background.
pub fn background_distractors(gt: &LabelMap, count: usize, rng: &mut impl Rng) -> Result<Vec<BinaryMask>> {
    let (w, h) = gt.dims();
    if count > 0 && !gt.labels().contains(&gt.background()) {
        return Err(Error::InvalidArgument("no background pixels to place distractors on".into()));
    }
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > 10_000 * count {
            return Err(Error::InvalidArgument("could not place background distractors".into()));
        }
        let rw = rng.random_range(1..=(w / 4).max(1));
        let rh = rng.random_range(1..=(h / 4).max(1));
        let x = rng.random_range(0..=w - rw);
        let y = rng.random_range(0..=h - rh);
        let mask = BinaryMask::rect(w, h, Rect::new(x, y, rw, rh))?;
        if dominant_class(&mask, gt)? == gt.background() {
            out.push(mask);
        }
    }
    Ok(out)
}

/// Proposals cut from ground truth: one mask per connected component of each
/// non-background class, plus background-dominated distractor rectangles.
pub struct OracleProposals {
    gt: LabelMap,
    exact: bool,
    distractors: usize,
    seed: u64,
}

impl OracleProposals {
    pub fn new(gt: LabelMap, exact: bool, distractors: usize, seed: u64) -> Self {
        Self {
            gt,
            exact,
            distractors,
            seed,
        }
    }
}

impl ProposalProvider for OracleProposals {
    fn proposals(&self, image: &RgbImage, _grid_n: u32, region: Option<&Region>) -> Result<Vec<BinaryMask>> {
        let rect = region.map_or(Rect::new(0, 0, self.gt.width(), self.gt.height()), |r| r.rect);
        if image.dimensions() != (rect.w, rect.h) {
            return Err(Error::dims((rect.w, rect.h), image.dimensions()));
        }
        let local = if rect == Rect::new(0, 0, self.gt.width(), self.gt.height()) {
            self.gt.clone()
        } else {
            crop_labels(&self.gt, rect)?
        };
        let mut out = if self.exact { label_components(&local) } else { Vec::new() };
        let tile_seed = splitmix(self.seed ^ splitmix(((rect.x as u64) << 32) | rect.y as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(tile_seed);
        out.extend(background_distractors(&local, self.distractors, &mut rng)?);
        Ok(out)
    }
}

/// Suggests one positive click at the deepest pixel of each ground-truth
/// component, largest components first.
pub struct OracleClickSuggester {
    gt: BinaryMask,
}

impl OracleClickSuggester {
    pub fn new(gt: BinaryMask) -> Self {
        Self { gt }
    }

    pub fn clicks(&self, max_clicks: usize) -> ClickSet {
        let mut comps = connected_components(&self.gt);
        comps.sort_by_key(|c| std::cmp::Reverse(c.count()));
        let mut set = ClickSet::new();
        for comp in comps.iter().take(max_clicks) {
            let field = distance_transform(comp);
            let mut best = (0, 0, 0);
            for (x, y) in comp.iter_set() {
                let d = field.squared(x, y);
                if d > best.2 {
                    best = (x, y, d);
                }
            }
            set.push(crate::clicks::Click::positive(best.0, best.1));
        }
        set
    }
}

impl ClickSuggester for OracleClickSuggester {
    fn suggest(&self, _image: &RgbImage, _question: &str, max_clicks: usize) -> Result<String> {
        Ok(serialize_clicks_text(&self.clicks(max_clicks)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Geometry {
    Rect { x: u32, y: u32, w: u32, h: u32 },
    Disk { cx: u32, cy: u32, r: u32 },
}

impl Geometry {
    fn contains(&self, px: u32, py: u32) -> bool {
        match *self {
            Geometry::Rect { x, y, w, h } => Rect::new(x, y, w, h).contains(px, py),
            Geometry::Disk { cx, cy, r } => {
                let dx = px as i64 - cx as i64;
                let dy = py as i64 - cy as i64;
                dx * dx + dy * dy <= (r as i64) * (r as i64)
            }
        }
    }

    fn check(&self, width: u32, height: u32) -> Result<()> {
        let ok = match *self {
            Geometry::Rect { x, y, w, h } => w > 0 && h > 0 && x + w <= width && y + h <= height,
            Geometry::Disk { cx, cy, r } => cx >= r && cy >= r && cx + r < width && cy + r < height,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("shape {self:?} not inside {width}x{height} scene")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub class: u32,
    pub geometry: Geometry,
}

/// Declarative synthetic scene. Later shapes occlude earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub class_count: u32,
    #[serde(default)]
    pub background: u32,
    pub shapes: Vec<Shape>,
    pub seed: u64,
    #[serde(default)]
    pub noise: f32,
    #[serde(default)]
    pub distractor_count: usize,
}

impl SceneSpec {
    /// A random scene with `shape_count` shapes of classes `1..class_count`
    /// on a background of class 0.
    pub fn random(seed: u64, width: u32, height: u32, class_count: u32, shape_count: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = (0..shape_count)
            .map(|_| {
                let class = rng.random_range(1..class_count.max(2));
                let geometry = if rng.random_bool(0.5) {
                    let w = rng.random_range(2..=(width / 3).max(2));
                    let h = rng.random_range(2..=(height / 3).max(2));
                    Geometry::Rect {
                        x: rng.random_range(0..=width - w),
                        y: rng.random_range(0..=height - h),
                        w,
                        h,
                    }
                } else {
                    let r = rng.random_range(1..=(width.min(height) / 6).max(1));
                    Geometry::Disk {
                        cx: rng.random_range(r..width - r),
                        cy: rng.random_range(r..height - r),
                        r,
                    }
                };
                Shape { class, geometry }
            })
            .collect();
        Self {
            width,
            height,
            class_count,
            background: 0,
            shapes,
            seed,
            noise: 0.0,
            distractor_count: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: RgbImage,
    pub gt: LabelMap,
    pub maps: Vec<ProbabilityMap>,
    pub proposals: ProposalSet,
}

const PALETTE: [[u8; 3]; 8] = [
    [40, 40, 40],
    [200, 60, 60],
    [60, 170, 60],
    [60, 90, 200],
    [210, 190, 60],
    [170, 70, 190],
    [60, 190, 190],
    [230, 130, 40],
];

/// Renders a scene: image, ground-truth labels, per-class indicator maps
/// (with optional noise) and proposals (one exact mask per visible shape
/// plus background-dominated distractors).
pub fn make_scene(spec: &SceneSpec) -> Result<Scene> {
    let (w, h) = (spec.width, spec.height);
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument("scene must have positive size".into()));
    }
    if spec.background >= spec.class_count {
        return Err(Error::InvalidArgument("background index out of range".into()));
    }
    if !(0.0..=1.0).contains(&spec.noise) {
        return Err(Error::InvalidArgument(format!("noise {} outside [0, 1]", spec.noise)));
    }
    for s in &spec.shapes {
        if s.class >= spec.class_count {
            return Err(Error::InvalidArgument(format!("shape class {} out of range", s.class)));
        }
        s.geometry.check(w, h)?;
    }

    let mut labels = vec![spec.background; w as usize * h as usize];
    let mut owner: Vec<Option<usize>> = vec![None; labels.len()];
    for (i, s) in spec.shapes.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if s.geometry.contains(x, y) {
                    let idx = y as usize * w as usize + x as usize;
                    labels[idx] = s.class;
                    owner[idx] = Some(i);
                }
            }
        }
    }
    let gt = LabelMap::new(w, h, labels, spec.class_count, spec.background)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let image = RgbImage::from_fn(w, h, |x, y| {
        let base = PALETTE[gt.get(x, y) as usize % PALETTE.len()];
        let jitter: i16 = rng.random_range(-8..=8);
        Rgb(base.map(|c| (c as i16 + jitter).clamp(0, 255) as u8))
    });

    let maps = (0..spec.class_count)
        .map(|class| {
            ProbabilityMap::from_fn(w, h, |x, y| {
                noisy_indicator(gt.get(x, y) == class, spec.noise, spec.seed, class, x, y)
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut proposals = ProposalSet::empty(w, h);
    for i in 0..spec.shapes.len() {
        let mask = BinaryMask::from_fn(w, h, |x, y| owner[y as usize * w as usize + x as usize] == Some(i))?;
        if !mask.is_empty() {
            proposals.push(mask)?;
        }
    }
    for d in background_distractors(&gt, spec.distractor_count, &mut rng)? {
        proposals.push(d)?;
    }

    Ok(Scene {
        image,
        gt,
        maps,
        proposals,
    })
}

/// Writes scenes to `dir` as PNG images plus a JSON-lines manifest and
/// returns the manifest path.
///
/// For `Task::Ovss` the ground truth is the label map; scenes with the same
/// class count share a class list and a dataset name. For the click tasks it is the scene's foreground mask.
pub fn write_corpus(dir: &Path, specs: &[SceneSpec], task: Task) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut lines = String::new();
    let mut class_files: Vec<(u32, u32, String)> = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let scene = make_scene(spec)?;
        let image = format!("scene_{i:04}.png");
        let gt = format!("scene_{i:04}_gt.png");
        write_rgb(dir.join(&image), &scene.image)?;
        let mut record = ManifestRecord {
            image: image.into(),
            gt_mask: gt.clone().into(),
            task,
            classes: None,
            question: None,
            group: None,
            dataset: None,
        };
        if task == Task::Ovss {
            write_label_map(dir.join(&gt), &scene.gt)?;
            let key = (spec.class_count, spec.background);
            let name = match class_files.iter().find(|(c, b, _)| (*c, *b) == key) {
                Some((_, _, n)) => n.clone(),
                None => {
                    let n = format!("classes_{}_{}.txt", key.0, key.1);
                    let mut text = format!("#background={}\n", key.1);
                    for c in 0..key.0 {
                        text.push_str(&if c == key.1 { "background".to_string() } else { format!("class{c}") });
                        text.push('\n');
                    }
                    let path = dir.join(&n);
                    std::fs::write(&path, text).map_err(|e| Error::file(&path, e))?;
                    class_files.push((key.0, key.1, n.clone()));
                    n
                }
            };
            record.dataset = Some(format!("scenes-{}-classes", key.0));
            record.classes = Some(name.into());
        } else {
            write_mask(dir.join(&gt), &scene.gt.foreground_mask())?;
            record.question = Some("segment the foreground objects".into());
        }
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    let manifest = dir.join("manifest.jsonl");
    std::fs::write(&manifest, lines).map_err(|e| Error::file(&manifest, e))?;
    Ok(manifest)
}
