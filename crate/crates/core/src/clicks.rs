//! Click prompts: the textual and JSON wire forms, error-driven click
//! sampling, the iterative click-supervision loop and mask voting.

use std::fmt;

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::providers::Segmenter;
use crate::raster::{distance_transform, iou, mask_difference, BinaryMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Click {
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

impl Click {
    pub const fn positive(x: u32, y: u32) -> Self {
        Self {
            x,
            y,
            polarity: Polarity::Positive,
        }
    }

    pub const fn negative(x: u32, y: u32) -> Self {
        Self {
            x,
            y,
            polarity: Polarity::Negative,
        }
    }
}

/// Ordered positive and negative clicks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ClickSet {
    positives: Vec<Click>,
    negatives: Vec<Click>,
}

impl ClickSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from coordinate lists; polarities are taken from the list.
    pub fn from_coords(positives: &[(u32, u32)], negatives: &[(u32, u32)]) -> Self {
        Self {
            positives: positives.iter().map(|&(x, y)| Click::positive(x, y)).collect(),
            negatives: negatives.iter().map(|&(x, y)| Click::negative(x, y)).collect(),
        }
    }

    pub(crate) fn from_parts(positives: Vec<Click>, negatives: Vec<Click>) -> Self {
        debug_assert!(positives.iter().all(|c| c.polarity == Polarity::Positive));
        debug_assert!(negatives.iter().all(|c| c.polarity == Polarity::Negative));
        Self {
            positives,
            negatives,
        }
    }

    pub fn push(&mut self, click: Click) {
        match click.polarity {
            Polarity::Positive => self.positives.push(click),
            Polarity::Negative => self.negatives.push(click),
        }
    }

    pub fn positives(&self) -> &[Click] {
        &self.positives
    }

    pub fn negatives(&self) -> &[Click] {
        &self.negatives
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Click> {
        self.positives.iter().chain(&self.negatives)
    }

    pub fn positive_coords(&self) -> Vec<[u32; 2]> {
        self.positives.iter().map(|c| [c.x, c.y]).collect()
    }

    pub fn negative_coords(&self) -> Vec<[u32; 2]> {
        self.negatives.iter().map(|c| [c.x, c.y]).collect()
    }

    /// Enforces the total click budget of the text prompt.
    pub fn check_budget(&self, limit: usize) -> Result<()> {
        if self.len() > limit {
            return Err(Error::ClickBudget {
                count: self.len(),
                limit,
            });
        }
        Ok(())
    }

    pub fn check_bounds(&self, width: u32, height: u32) -> Result<()> {
        match self.iter().find(|c| c.x >= width || c.y >= height) {
            Some(c) => Err(Error::InvalidArgument(format!(
                "click ({}, {}) outside {width}x{height} image",
                c.x, c.y
            ))),
            None => Ok(()),
        }
    }
}

impl fmt::Display for ClickSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_clicks_text(self))
    }
}

fn write_list(out: &mut String, clicks: &[Click]) {
    out.push('[');
    for (i, c) in clicks.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&format!("({}, {})", c.x, c.y));
    }
    out.push(']');
}

/// `Positive: [(x, y), ...], Negative: [(x, y), ...]`
pub fn serialize_clicks_text(c: &ClickSet) -> String {
    let mut out = String::from("Positive: ");
    write_list(&mut out, &c.positives);
    out.push_str(", Negative: ");
    write_list(&mut out, &c.negatives);
    out
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn eat(&mut self, ch: char) -> bool {
        if self.peek() == Some(ch) {
            self.pos += ch.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, ch: char) -> Result<()> {
        self.skip_ws();
        if self.eat(ch) {
            Ok(())
        } else {
            Err(self.error(format!("expected {ch:?}")))
        }
    }

    fn skip_quotes(&mut self) {
        while matches!(self.peek(), Some('"' | '\'' | '`' | '\u{201c}' | '\u{201d}')) {
            let ch = self.peek().expect("peeked");
            self.pos += ch.len_utf8();
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        let found = match self.peek() {
            Some(c) => format!(", found {c:?}"),
            None => ", found end of input".into(),
        };
        Error::parse(self.pos, format!("{}{found}", message.into()))
    }

    fn integer(&mut self) -> Result<u32> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some('-') {
            return Err(self.error("coordinates must be non-negative"));
        }
        let digits = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return Err(self.error("expected integer coordinate"));
        }
        self.pos += digits;
        if matches!(self.peek(), Some('.' | 'e' | 'E')) {
            return Err(Error::parse(start, "coordinates must be integers"));
        }
        self.text[start..self.pos]
            .parse()
            .map_err(|_| Error::parse(start, "coordinate out of range"))
    }

    fn pair(&mut self) -> Result<(u32, u32)> {
        self.expect('(')?;
        let x = self.integer()?;
        self.expect(',')?;
        let y = self.integer()?;
        self.expect(')')?;
        Ok((x, y))
    }

    fn list(&mut self) -> Result<Vec<(u32, u32)>> {
        self.expect('[')?;
        let mut out = Vec::new();
        self.skip_ws();
        if self.eat(']') {
            return Ok(out);
        }
        loop {
            out.push(self.pair()?);
            self.skip_ws();
            if self.eat(']') {
                return Ok(out);
            }
            if !self.eat(',') {
                return Err(self.error("expected ',' or ']' in click list"));
            }
            self.skip_ws();
            // trailing comma
            if self.eat(']') {
                return Ok(out);
            }
        }
    }

    fn key(&mut self, name: &str) -> Result<()> {
        self.skip_ws();
        self.skip_quotes();
        let rest = self.rest();
        if rest.len() < name.len() || !rest[..name.len()].eq_ignore_ascii_case(name) {
            return Err(self.error(format!("expected key {name:?}")));
        }
        self.pos += name.len();
        self.skip_quotes();
        self.expect(':')
    }
}

fn find_ignore_case(haystack: &str, needle: &str) -> Option<usize> {
    haystack
        .char_indices()
        .map(|(i, _)| i)
        .find(|&i| {
            haystack
                .get(i..i + needle.len())
                .is_some_and(|s| s.eq_ignore_ascii_case(needle))
        })
}

/// Parses the textual click form.
///
/// Text before the `Positive` key (for example a reasoning preamble) and
/// quoting or braces around the keys are tolerated. The `Negative` list may be
/// empty or absent. Only whitespace, `}` and `.` may follow the last list.
pub fn parse_clicks_text(text: &str) -> Result<ClickSet> {
    let start = find_ignore_case(text, "positive")
        .ok_or_else(|| Error::parse(0, "missing \"Positive\" key"))?;
    let mut cur = Cursor { text, pos: start };
    cur.key("positive")?;
    let positives = cur.list()?;
    cur.skip_ws();
    cur.skip_quotes();
    let mut negatives = Vec::new();
    if cur.eat(',') || cur.eat(';') {
        cur.skip_ws();
    }
    if find_ignore_case(cur.rest(), "negative").is_some_and(|i| cur.rest()[..i].trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '\u{201c}' | '\u{201d}')).is_empty()) {
        cur.key("negative")?;
        negatives = cur.list()?;
    }
    cur.skip_ws();
    cur.skip_quotes();
    while matches!(cur.peek(), Some('}' | '.' | ',')) {
        cur.pos += 1;
        cur.skip_ws();
    }
    if cur.peek().is_some() {
        return Err(cur.error("unexpected trailing text"));
    }
    Ok(ClickSet::from_coords(&positives, &negatives))
}

fn json_click(value: &serde_json::Value, index: usize, offset: usize) -> Result<Click> {
    let coord = |key: &str| -> Result<u32> {
        let v = value
            .get(key)
            .ok_or_else(|| Error::parse(offset, format!("entry {index} missing {key:?}")))?;
        v.as_u64()
            .and_then(|n| u32::try_from(n).ok())
            .ok_or_else(|| Error::parse(offset, format!("entry {index}: {key:?} is not a non-negative integer")))
    };
    Ok(Click::positive(coord("x")?, coord("y")?))
}

fn first_json_array(text: &str) -> Option<(usize, Vec<serde_json::Value>)> {
    use serde::Deserialize as _;
    for (i, _) in text.match_indices('[') {
        let mut de = serde_json::Deserializer::from_str(&text[i..]);
        if let Ok(serde_json::Value::Array(items)) = serde_json::Value::deserialize(&mut de) {
            return Some((i, items));
        }
    }
    None
}

/// Extracts the first JSON array of `{"x": .., "y": ..}` objects from free
/// text. Every entry becomes a positive click. Python-style single-quoted
/// objects are accepted as a fallback.
pub fn parse_clicks_json(text: &str) -> Result<ClickSet> {
    let found = first_json_array(text).or_else(|| {
        if text.contains('\'') {
            first_json_array(&text.replace('\'', "\""))
        } else {
            None
        }
    });
    let (offset, items) = found.ok_or_else(|| Error::parse(0, "no JSON array found"))?;
    let positives = items
        .iter()
        .enumerate()
        .map(|(i, v)| json_click(v, i, offset))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClickSet::from_parts(positives, Vec::new()))
}

/// Wire format of raw click-suggester output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClickFormat {
    Text,
    Json,
    /// Text form when a `Positive` key is present, JSON otherwise.
    #[default]
    Auto,
}

impl std::str::FromStr for ClickFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "json" => Ok(Self::Json),
            "auto" => Ok(Self::Auto),
            other => Err(Error::Config(format!("unknown click format {other:?}"))),
        }
    }
}

pub fn parse_clicks(text: &str, format: ClickFormat) -> Result<ClickSet> {
    match format {
        ClickFormat::Text => parse_clicks_text(text),
        ClickFormat::Json => parse_clicks_json(text),
        ClickFormat::Auto if find_ignore_case(text, "positive").is_some() => parse_clicks_text(text),
        ClickFormat::Auto => parse_clicks_json(text),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// Draw a pixel with probability proportional to its distance value.
    #[default]
    Sample,
    /// Take the largest distance value, first in row-major order.
    Argmax,
}

impl std::str::FromStr for SampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(Self::Sample),
            "argmax" => Ok(Self::Argmax),
            other => Err(Error::Config(format!("unknown sample mode {other:?}"))),
        }
    }
}

/// Picks the next corrective click from the error regions.
///
/// Pixels are weighted by their distance to the nearest correct pixel, so
/// clicks land deep inside the largest errors. The click is positive when it
/// falls in `e_plus` (missed pixels) and negative otherwise.
pub fn sample_click<R: Rng + ?Sized>(
    e_plus: &BinaryMask,
    e_minus: &BinaryMask,
    rng: &mut R,
    mode: SampleMode,
) -> Result<Click> {
    let region = e_plus.union(e_minus)?;
    if region.is_empty() {
        return Err(Error::Empty("no error pixels to sample a click from"));
    }
    let field = distance_transform(&region);
    let (x, y) = match mode {
        SampleMode::Argmax => {
            let mut best = (0, 0);
            let mut best_d = 0;
            for (x, y) in region.iter_set() {
                let d = field.squared(x, y);
                if d > best_d {
                    best_d = d;
                    best = (x, y);
                }
            }
            best
        }
        SampleMode::Sample => {
            let pixels: Vec<(u32, u32)> = region.iter_set().collect();
            let weights: Vec<f64> = pixels.iter().map(|&(x, y)| field.get(x, y)).collect();
            let total: f64 = weights.iter().sum();
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = *pixels.last().expect("region is non-empty");
            for (p, w) in pixels.iter().zip(&weights) {
                acc += w;
                if target < acc {
                    chosen = *p;
                    break;
                }
            }
            chosen
        }
    };
    Ok(if e_plus.get(x, y) {
        Click::positive(x, y)
    } else {
        Click::negative(x, y)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Threshold,
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub click: Click,
    /// IoU of the prediction made with this click and all earlier ones.
    pub iou_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickTrace {
    pub steps: Vec<TraceStep>,
    pub final_iou: f64,
    pub terminated_by: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickGenParams {
    pub max_clicks: usize,
    pub tau: f64,
    pub mode: SampleMode,
}

impl Default for ClickGenParams {
    fn default() -> Self {
        Self {
            max_clicks: 6,
            tau: 0.98,
            mode: SampleMode::Sample,
        }
    }
}

/// Converts a ground-truth mask into a click sequence by repeatedly
/// prompting the segmenter and clicking on its largest error.
///
/// The empty click set predicts the empty mask without calling the
/// segmenter, so the first click is always positive and inside `gt`.
pub fn generate_click_sequence<R: Rng + ?Sized>(
    image: &RgbImage,
    gt: &BinaryMask,
    segmenter: &dyn Segmenter,
    params: &ClickGenParams,
    rng: &mut R,
) -> Result<(ClickSet, ClickTrace)> {
    if gt.is_empty() {
        return Err(Error::Empty("ground-truth mask has no foreground"));
    }
    if params.max_clicks == 0 {
        return Err(Error::InvalidArgument("click budget must be at least 1".into()));
    }
    if !(params.tau > 0.0 && params.tau <= 1.0) {
        return Err(Error::InvalidArgument(format!("tau {} outside (0, 1]", params.tau)));
    }

    let mut clicks = ClickSet::new();
    let mut steps: Vec<TraceStep> = Vec::new();
    let mut pred = BinaryMask::new(gt.width(), gt.height())?;
    loop {
        let current = iou(&pred, gt)?;
        if let Some(last) = steps.last_mut() {
            last.iou_after = current;
        }
        if current >= params.tau {
            return Ok((clicks, ClickTrace { steps, final_iou: current, terminated_by: Termination::Threshold }));
        }
        if steps.len() == params.max_clicks {
            return Ok((clicks, ClickTrace { steps, final_iou: current, terminated_by: Termination::Budget }));
        }
        let e_plus = mask_difference(gt, &pred)?;
        let e_minus = mask_difference(&pred, gt)?;
        let click = sample_click(&e_plus, &e_minus, rng, params.mode)?;
        clicks.push(click);
        steps.push(TraceStep { click, iou_after: 0.0 });

        let step = steps.len();
        pred = segmenter
            .segment(image, &clicks)
            .and_then(|m| {
                m.ensure_same_dims(gt.dims())?;
                Ok(m)
            })
            .map_err(|e| Error::SegmenterStep { step, source: Box::new(e) })?;
    }
}

/// Per-pixel majority vote; a pixel set in exactly half the masks is kept.
pub fn ensemble_vote(masks: &[BinaryMask]) -> Result<BinaryMask> {
    ensemble_vote_with(masks, true)
}

/// Majority vote with an explicit rule for even splits.
pub fn ensemble_vote_with(masks: &[BinaryMask], ties_foreground: bool) -> Result<BinaryMask> {
    let first = masks.first().ok_or(Error::Empty("ensemble_vote needs at least one mask"))?;
    let mut counts = vec![0u32; first.len()];
    for m in masks {
        m.ensure_same_dims(first.dims())?;
        for (x, y) in m.iter_set() {
            counts[y as usize * first.width() as usize + x as usize] += 1;
        }
    }
    let n = masks.len() as u32;
    let mut out = BinaryMask::new(first.width(), first.height())?;
    for (i, &c) in counts.iter().enumerate() {
        if 2 * c > n || (ties_foreground && 2 * c == n) {
            out.set_index(i, true);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportClicks {
    pub positive: Vec<[u32; 2]>,
    pub negative: Vec<[u32; 2]>,
}

/// One line of the exported click-supervision dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickExportRecord {
    pub image: String,
    pub prompt: String,
    pub clicks: ExportClicks,
    pub final_iou: f64,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_mask: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceStep>,
}

impl ClickExportRecord {
    pub fn new(image: String, prompt: String, clicks: &ClickSet, trace: &ClickTrace) -> Self {
        Self {
            image,
            prompt,
            clicks: ExportClicks {
                positive: clicks.positive_coords(),
                negative: clicks.negative_coords(),
            },
            final_iou: trace.final_iou,
            steps: trace.steps.len(),
            gt_mask: None,
            trace: trace.steps.clone(),
        }
    }

    /// Clicks in generation order, from the trace when present.
    pub fn ordered_clicks(&self) -> Vec<Click> {
        if !self.trace.is_empty() {
            return self.trace.iter().map(|s| s.click).collect();
        }
        let pos = self.clicks.positive.iter().map(|&[x, y]| Click::positive(x, y));
        let neg = self.clicks.negative.iter().map(|&[x, y]| Click::negative(x, y));
        pos.chain(neg).collect()
    }
}
