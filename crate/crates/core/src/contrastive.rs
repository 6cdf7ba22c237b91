//! Mask selection and multi-class composition over category-agnostic
//! proposals, driven by per-pixel class probabilities.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{fraction_above, BinaryMask, LabelMap, ProbabilityMap};

/// Probability cut for a pixel and the majority cut for a proposal. Both strict.
pub const SELECTION_THRESHOLD: f32 = 0.5;

/// Proposals from a promptable segmenter, all sharing one raster size.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet {
    width: u32,
    height: u32,
    proposals: Vec<BinaryMask>,
    source_grid: u32,
}

impl ProposalSet {
    pub fn new(width: u32, height: u32, proposals: Vec<BinaryMask>, source_grid: u32) -> Result<Self> {
        for p in &proposals {
            p.ensure_same_dims((width, height))?;
        }
        Ok(Self {
            width,
            height,
            proposals,
            source_grid,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            proposals: Vec::new(),
            source_grid: 0,
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn source_grid(&self) -> u32 {
        self.source_grid
    }

    pub fn proposals(&self) -> &[BinaryMask] {
        &self.proposals
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    pub fn push(&mut self, mask: BinaryMask) -> Result<()> {
        mask.ensure_same_dims(self.dims())?;
        self.proposals.push(mask);
        Ok(())
    }
}

/// Ordered class names with a designated background entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPrompts {
    names: Vec<String>,
    background: u32,
}

impl ClassPrompts {
    pub fn new(names: Vec<String>, background: u32) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Empty("class list"));
        }
        if background as usize >= names.len() {
            return Err(Error::InvalidArgument(format!(
                "background index {background} out of range for {} classes",
                names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate class name {dup:?}")));
        }
        Ok(Self { names, background })
    }

    /// Parses the class-prompt file format: one name per line, with an
    /// optional leading `#background=<index>` line. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut background = 0;
        let mut names = Vec::new();
        let mut offset = 0;
        for (i, line) in text.split_inclusive('\n').enumerate() {
            let trimmed = line.trim();
            if i == 0 {
                if let Some(rest) = trimmed.strip_prefix("#background=") {
                    background = rest
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(offset, format!("bad background index {rest:?}")))?;
                    offset += line.len();
                    continue;
                }
            }
            if !trimmed.is_empty() {
                names.push(trimmed.to_string());
            }
            offset += line.len();
        }
        Self::new(names, background)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn background(&self) -> u32 {
        self.background
    }
}

/// Union of the proposals whose pixels are mostly above the probability
/// threshold. Empty proposals are never selected.
pub fn select_masks(prob: &ProbabilityMap, proposals: &ProposalSet) -> Result<BinaryMask> {
    if prob.dims() != proposals.dims() {
        return Err(Error::dims(proposals.dims(), prob.dims()));
    }
    let mut out = BinaryMask::new(prob.width(), prob.height())?;
    for mask in proposals.proposals() {
        if mask.is_empty() {
            continue;
        }
        if fraction_above(mask, prob, SELECTION_THRESHOLD)? > SELECTION_THRESHOLD as f64 {
            out = out.union(mask)?;
        }
    }
    Ok(out)
}

/// Per-pixel argmax over class probability maps; ties go to the lower index.
pub fn pixel_argmax(maps: &[ProbabilityMap], prompts: &ClassPrompts) -> Result<LabelMap> {
    if maps.len() != prompts.len() {
        return Err(Error::CountMismatch {
            what: "probability maps",
            expected: prompts.len(),
            actual: maps.len(),
        });
    }
    let first = &maps[0];
    for m in &maps[1..] {
        if m.dims() != first.dims() {
            return Err(Error::dims(first.dims(), m.dims()));
        }
    }
    let n = first.values().len();
    let mut labels = vec![0u32; n];
    let mut best = first.values().to_vec();
    for (class, m) in maps.iter().enumerate().skip(1) {
        for (i, &v) in m.values().iter().enumerate() {
            if v > best[i] {
                best[i] = v;
                labels[i] = class as u32;
            }
        }
    }
    LabelMap::new(
        first.width(),
        first.height(),
        labels,
        prompts.len() as u32,
        prompts.background(),
    )
}

/// Class with the most pixels inside `mask`; ties go to the lower index.
pub fn dominant_class(mask: &BinaryMask, labels: &LabelMap) -> Result<u32> {
    mask.ensure_same_dims(labels.dims())?;
    if mask.is_empty() {
        return Err(Error::Empty("dominant_class needs a non-empty mask"));
    }
    let mut counts = vec![0usize; labels.class_count() as usize];
    for (x, y) in mask.iter_set() {
        counts[labels.get(x, y) as usize] += 1;
    }
    let mut best = 0;
    for (class, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = class;
        }
    }
    Ok(best as u32)
}

/// What pixels outside every painted proposal become.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncoveredPolicy {
    #[default]
    Background,
    PixelArgmax,
}

impl std::str::FromStr for UncoveredPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "background" => Ok(Self::Background),
            "pixel-argmax" => Ok(Self::PixelArgmax),
            other => Err(Error::Config(format!("unknown uncovered policy {other:?}"))),
        }
    }
}

/// Paints every proposal with its dominant class.
///
/// Proposals are painted largest first so that smaller ones overwrite the
/// larger ones they overlap. Background-dominated and empty proposals paint
/// nothing.
pub fn compose_multiclass(
    proposals: &ProposalSet,
    labels: &LabelMap,
    prompts: &ClassPrompts,
    uncovered: UncoveredPolicy,
) -> Result<LabelMap> {
    if proposals.dims() != labels.dims() {
        return Err(Error::dims(labels.dims(), proposals.dims()));
    }
    if labels.class_count() as usize != prompts.len() {
        return Err(Error::CountMismatch {
            what: "classes",
            expected: prompts.len(),
            actual: labels.class_count() as usize,
        });
    }
    let background = prompts.background();
    let mut painted: Vec<(usize, &BinaryMask, u32)> = Vec::new();
    for mask in proposals.proposals() {
        if mask.is_empty() {
            continue;
        }
        let class = dominant_class(mask, labels)?;
        if class != background {
            painted.push((mask.count(), mask, class));
        }
    }
    // stable: equal areas keep proposal order
    painted.sort_by_key(|p| std::cmp::Reverse(p.0));

    let (w, h) = labels.dims();
    let mut out = LabelMap::background_filled(w, h, prompts.len() as u32, background)?;
    let mut covered = BinaryMask::new(w, h)?;
    for (_, mask, class) in painted {
        for (x, y) in mask.iter_set() {
            out.set(x, y, class);
            covered.set(x, y, true);
        }
    }
    if uncovered == UncoveredPolicy::PixelArgmax {
        for y in 0..h {
            for x in 0..w {
                if !covered.get(x, y) {
                    out.set(x, y, labels.get(x, y));
                }
            }
        }
    }
    Ok(out)
}

/// Row-major token embeddings plus the global `<CLS>` embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    cls: Vec<f32>,
}

impl TokenMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>, cls: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::CountMismatch {
                what: "token values",
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if cls.len() != cols {
            return Err(Error::CountMismatch {
                what: "cls entries",
                expected: cols,
                actual: cls.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            values,
            cls,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn cls(&self) -> &[f32] {
        &self.cls
    }
}

/// Subtracts `scale * cls` from every token row.
pub fn debias_tokens(tokens: &TokenMatrix, scale: f32) -> TokenMatrix {
    let mut out = tokens.clone();
    if tokens.cols == 0 {
        return out;
    }
    for row in out.values.chunks_exact_mut(tokens.cols) {
        for (v, c) in row.iter_mut().zip(&tokens.cls) {
            *v -= scale * c;
        }
    }
    out
}
