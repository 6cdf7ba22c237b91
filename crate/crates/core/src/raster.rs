//! Rasters and the set arithmetic the pipelines are built on.
//!
//! Coordinates are `(x, y)` with `x` to the right and `y` downwards, origin at
//! the top-left corner. All planes are stored row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }
}

const WORD_BITS: usize = 64;

/// Bit-packed boolean raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    // bits past width*height in the last word are always zero
    words: Vec<u64>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BinaryMask({}x{}, {} set)", self.width, self.height, self.count())?;
        if self.width <= 16 && self.height <= 16 {
            for y in 0..self.height {
                f.write_str("\n  ")?;
                for x in 0..self.width {
                    f.write_str(if self.get(x, y) { "#" } else { "." })?;
                }
            }
        }
        Ok(())
    }
}

fn check_size(width: u32, height: u32) -> Result<usize> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "raster dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(width as usize * height as usize)
}

impl BinaryMask {
    /// All-zeros mask.
    pub fn new(width: u32, height: u32) -> Result<Self> {
        let n = check_size(width, height)?;
        Ok(Self {
            width,
            height,
            words: vec![0; n.div_ceil(WORD_BITS)],
        })
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Result<Self> {
        let mut mask = Self::new(width, height)?;
        if value {
            mask.words.iter_mut().for_each(|w| *w = u64::MAX);
            mask.clear_tail();
        }
        Ok(mask)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut mask = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.set(x, y, true);
                }
            }
        }
        Ok(mask)
    }

    pub fn from_bools(width: u32, height: u32, bits: &[bool]) -> Result<Self> {
        let n = check_size(width, height)?;
        if bits.len() != n {
            return Err(Error::CountMismatch {
                what: "pixels",
                expected: n,
                actual: bits.len(),
            });
        }
        let mut mask = Self::new(width, height)?;
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            mask.words[i / WORD_BITS] |= 1 << (i % WORD_BITS);
        }
        Ok(mask)
    }

    pub fn rect(width: u32, height: u32, rect: Rect) -> Result<Self> {
        Self::from_fn(width, height, |x, y| rect.contains(x, y))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    fn clear_tail(&mut self) {
        let n = self.len();
        let rem = n % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.get_index(self.index(x, y))
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.set_index(i, value);
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, value: bool) {
        let bit = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= bit;
        } else {
            self.words[i / WORD_BITS] &= !bit;
        }
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    /// Row-major iterator over set pixel coordinates.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let i = wi * WORD_BITS + tz;
                Some(((i % w) as u32, (i / w) as u32))
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.get_index(i)).collect()
    }

    pub(crate) fn ensure_same_dims(&self, other_dims: (u32, u32)) -> Result<()> {
        if self.dims() != other_dims {
            return Err(Error::dims(self.dims(), other_dims));
        }
        Ok(())
    }

    fn zip_words(&self, other: &Self, op: impl Fn(u64, u64) -> u64) -> Result<Self> {
        self.ensure_same_dims(other.dims())?;
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(&other.words) {
            *a = op(*a, *b);
        }
        out.clear_tail();
        Ok(out)
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.zip_words(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &Self) -> Result<Self> {
        self.zip_words(other, |a, b| a & b)
    }

    /// Pixels set in `self` and clear in `other`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.zip_words(other, |a, b| a & !b)
    }

    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        out.words.iter_mut().for_each(|w| *w = !*w);
        out.clear_tail();
        out
    }

    pub fn intersection_count(&self, other: &Self) -> Result<usize> {
        self.ensure_same_dims(other.dims())?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    pub fn union_count(&self, other: &Self) -> Result<usize> {
        self.ensure_same_dims(other.dims())?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum())
    }

    pub fn is_subset_of(&self, other: &Self) -> Result<bool> {
        self.ensure_same_dims(other.dims())?;
        Ok(self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0))
    }

    /// Copies out the pixels under `rect`.
    pub fn crop(&self, rect: Rect) -> Result<Self> {
        if rect.right() > self.width || rect.bottom() > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {rect:?} exceeds {}x{} mask",
                self.width, self.height
            )));
        }
        Self::from_fn(rect.w, rect.h, |x, y| self.get(rect.x + x, rect.y + y))
    }

    /// Writes `tile` into `self` with its top-left corner at `(rect.x, rect.y)`.
    pub fn paste(&mut self, tile: &Self, at: (u32, u32)) -> Result<()> {
        let (ox, oy) = at;
        if ox + tile.width > self.width || oy + tile.height > self.height {
            return Err(Error::InvalidArgument(format!(
                "{}x{} tile at {at:?} exceeds {}x{} mask",
                tile.width, tile.height, self.width, self.height
            )));
        }
        for y in 0..tile.height {
            for x in 0..tile.width {
                self.set(ox + x, oy + y, tile.get(x, y));
            }
        }
        Ok(())
    }

    /// Bounding rectangle of the set pixels, `None` when empty.
    pub fn bounding_rect(&self) -> Option<Rect> {
        let mut it = self.iter_set();
        let (x0, y0) = it.next()?;
        let (mut min_x, mut max_x, mut max_y) = (x0, x0, y0);
        for (x, y) in it {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            max_y = y;
        }
        Some(Rect::new(min_x, y0, max_x - min_x + 1, max_y - y0 + 1))
    }
}

/// Union of a non-empty list of equally sized masks.
pub fn mask_union<'a, I>(masks: I) -> Result<BinaryMask>
where
    I: IntoIterator<Item = &'a BinaryMask>,
{
    let mut it = masks.into_iter();
    let first = it.next().ok_or(Error::Empty("mask_union needs at least one mask"))?;
    it.try_fold(first.clone(), |acc, m| acc.union(m))
}

pub fn mask_difference(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    a.difference(b)
}

/// Intersection over union. Two empty masks score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let union = a.union_count(b)?;
    if union == 0 {
        return Ok(1.0);
    }
    let inter = a.intersection_count(b)?;
    Ok(inter as f64 / union as f64)
}

/// Row-major plane of foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
}

impl ProbabilityMap {
    pub fn new(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        let n = check_size(width, height)?;
        if values.len() != n {
            return Err(Error::CountMismatch {
                what: "probabilities",
                expected: n,
                actual: values.len(),
            });
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidArgument(format!(
                "probability {v} at index {i} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: u32, height: u32, value: f32) -> Result<Self> {
        let n = check_size(width, height)?;
        Self::new(width, height, vec![value; n])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Result<Self> {
        check_size(width, height)?;
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    /// Indicator map: 1 inside the mask, 0 outside.
    pub fn indicator(mask: &BinaryMask) -> Self {
        Self {
            width: mask.width(),
            height: mask.height(),
            values: (0..mask.len())
                .map(|i| if mask.get_index(i) { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Fraction of the mask's pixels whose probability is strictly above `threshold`.
pub fn fraction_above(mask: &BinaryMask, prob: &ProbabilityMap, threshold: f32) -> Result<f64> {
    mask.ensure_same_dims(prob.dims())?;
    let total = mask.count();
    if total == 0 {
        return Err(Error::Empty("fraction_above is undefined on an empty mask"));
    }
    let above = mask
        .iter_set()
        .filter(|&(x, y)| prob.get(x, y) > threshold)
        .count();
    Ok(above as f64 / total as f64)
}

/// Row-major plane of class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    class_count: u32,
    background: u32,
}

impl LabelMap {
    pub fn new(
        width: u32,
        height: u32,
        labels: Vec<u32>,
        class_count: u32,
        background: u32,
    ) -> Result<Self> {
        let n = check_size(width, height)?;
        if labels.len() != n {
            return Err(Error::CountMismatch {
                what: "labels",
                expected: n,
                actual: labels.len(),
            });
        }
        if background >= class_count {
            return Err(Error::InvalidArgument(format!(
                "background index {background} not below class count {class_count}"
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} not below class count {class_count}"
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            class_count,
            background,
        })
    }

    /// Every pixel set to the background index.
    pub fn background_filled(
        width: u32,
        height: u32,
        class_count: u32,
        background: u32,
    ) -> Result<Self> {
        let n = check_size(width, height)?;
        Self::new(width, height, vec![background; n], class_count, background)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn background(&self) -> u32 {
        self.background
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub(crate) fn set(&mut self, x: u32, y: u32, label: u32) {
        debug_assert!(label < self.class_count);
        let w = self.width as usize;
        self.labels[y as usize * w + x as usize] = label;
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Pixels carrying `class`.
    pub fn class_mask(&self, class: u32) -> BinaryMask {
        let mut mask = BinaryMask::new(self.width, self.height).expect("validated dims");
        for (i, _) in self.labels.iter().enumerate().filter(|(_, l)| **l == class) {
            mask.set_index(i, true);
        }
        mask
    }

    /// Foreground mask: everything not labeled background.
    pub fn foreground_mask(&self) -> BinaryMask {
        self.class_mask(self.background).complement()
    }
}

/// Exact Euclidean distance of each region pixel to the nearest non-region
/// pixel. Stored as integer squared distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: u32,
    height: u32,
    squared: Vec<u32>,
}

impl DistanceField {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn squared(&self, x: u32, y: u32) -> u32 {
        self.squared[y as usize * self.width as usize + x as usize]
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        (self.squared(x, y) as f64).sqrt()
    }

    pub fn squared_values(&self) -> &[u32] {
        &self.squared
    }

    pub fn values(&self) -> Vec<f64> {
        self.squared.iter().map(|&d| (d as f64).sqrt()).collect()
    }
}

/// Exact Euclidean distance transform of `region`.
///
/// Coordinates beyond the image frame count as outside the region, so region
/// pixels on the border get distance 1. Runs the separable two-pass algorithm
/// of Meijster et al. on a grid padded by one outside pixel on every side,
/// which keeps every column scan finite and makes the frame rule exact.
pub fn distance_transform(region: &BinaryMask) -> DistanceField {
    let (w, h) = (region.width() as usize, region.height() as usize);
    let (pw, ph) = (w + 2, h + 2);
    let inside = |px: usize, py: usize| -> bool {
        px >= 1 && py >= 1 && px <= w && py <= h && region.get((px - 1) as u32, (py - 1) as u32)
    };

    // Vertical distance to the nearest outside pixel in the same column.
    let mut g = vec![0i64; pw * ph];
    for px in 0..pw {
        for py in 1..ph {
            if inside(px, py) {
                g[py * pw + px] = g[(py - 1) * pw + px] + 1;
            }
        }
        for py in (0..ph - 1).rev() {
            let below = g[(py + 1) * pw + px];
            if below < g[py * pw + px] {
                g[py * pw + px] = below + 1;
            }
        }
    }

    let mut squared = vec![0u32; w * h];
    let mut s = vec![0i64; pw];
    let mut t = vec![0i64; pw];
    let width = pw as i64;
    for py in 1..=h {
        let row = &g[py * pw..(py + 1) * pw];
        let gi = |i: i64| row[i as usize];
        let f = |x: i64, i: i64| (x - i) * (x - i) + gi(i) * gi(i);
        let sep = |i: i64, u: i64| (u * u - i * i + gi(u) * gi(u) - gi(i) * gi(i)).div_euclid(2 * (u - i));

        let mut q: i64 = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..width {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let wsep = 1 + sep(s[q as usize], u);
                if wsep < width {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = wsep;
                }
            }
        }
        for u in (0..width).rev() {
            let d = f(u, s[q as usize]);
            if (1..=w as i64).contains(&u) {
                squared[(py - 1) * w + (u - 1) as usize] = d as u32;
            }
            if u == t[q as usize] {
                q -= 1;
            }
        }
    }

    DistanceField {
        width: region.width(),
        height: region.height(),
        squared,
    }
}

/// 4-connected components of `mask`, ordered by their first pixel in
/// row-major order.
pub fn connected_components(mask: &BinaryMask) -> Vec<BinaryMask> {
    let (w, h) = mask.dims();
    let mut seen = BinaryMask::new(w, h).expect("validated dims");
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for (sx, sy) in mask.iter_set() {
        if seen.get(sx, sy) {
            continue;
        }
        let mut comp = BinaryMask::new(w, h).expect("validated dims");
        seen.set(sx, sy, true);
        stack.push((sx, sy));
        while let Some((x, y)) = stack.pop() {
            comp.set(x, y, true);
            let neighbors = [
                (x.wrapping_sub(1), y),
                (x + 1, y),
                (x, y.wrapping_sub(1)),
                (x, y + 1),
            ];
            for (nx, ny) in neighbors {
                if nx < w && ny < h && mask.get(nx, ny) && !seen.get(nx, ny) {
                    seen.set(nx, ny, true);
                    stack.push((nx, ny));
                }
            }
        }
        out.push(comp);
    }
    out
}

/// True when the pixel is set and has a 4-neighbor outside the mask
/// (out-of-frame counts as outside).
pub fn is_boundary_pixel(mask: &BinaryMask, x: u32, y: u32) -> bool {
    if !mask.get(x, y) {
        return false;
    }
    let (w, h) = mask.dims();
    x == 0
        || y == 0
        || x + 1 == w
        || y + 1 == h
        || !mask.get(x - 1, y)
        || !mask.get(x + 1, y)
        || !mask.get(x, y - 1)
        || !mask.get(x, y + 1)
}

/// One-pixel erosion with a 4-neighborhood; out-of-frame counts as outside.
pub fn erode4(mask: &BinaryMask) -> BinaryMask {
    let mut out = mask.clone();
    for (x, y) in mask.iter_set() {
        if is_boundary_pixel(mask, x, y) {
            out.set(x, y, false);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn half(w: u32, h: u32, left: bool) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, _| (x < w / 2) == left).unwrap()
    }

    fn random_mask(rng: &mut impl Rng, w: u32, h: u32, density: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap()
    }

    fn brute_squared(region: &BinaryMask) -> Vec<u32> {
        let (w, h) = (region.width() as i64, region.height() as i64);
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !region.get(x as u32, y as u32) {
                    out.push(0);
                    continue;
                }
                let mut best = [x + 1, w - x, y + 1, h - y]
                    .iter()
                    .map(|d| d * d)
                    .min()
                    .unwrap();
                for j in 0..h {
                    for i in 0..w {
                        if !region.get(i as u32, j as u32) {
                            best = best.min((x - i).pow(2) + (y - j).pow(2));
                        }
                    }
                }
                out.push(best as u32);
            }
        }
        out
    }

    #[test]
    fn rejects_zero_dimensions() {
        assert!(BinaryMask::new(0, 3).is_err());
        assert!(ProbabilityMap::constant(3, 0, 0.5).is_err());
    }

    #[test]
    fn union_examples() {
        let a = half(4, 4, true);
        assert_eq!(mask_union([&a]).unwrap(), a);
        let all = mask_union([&a, &half(4, 4, false)]).unwrap();
        assert_eq!(all, BinaryMask::filled(4, 4, true).unwrap());
        assert!(matches!(mask_union(std::iter::empty()), Err(Error::Empty(_))));
        assert!(matches!(
            mask_union([&a, &BinaryMask::new(4, 5).unwrap()]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn union_of_many_matches_pixelwise_or() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let masks: Vec<_> = (0..100).map(|_| random_mask(&mut rng, 16, 16, 0.03)).collect();
        let u = mask_union(&masks).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(u.get(x, y), masks.iter().any(|m| m.get(x, y)));
            }
        }
    }

    #[test]
    fn difference_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_mask(&mut rng, 13, 7, 0.5);
        let b = random_mask(&mut rng, 13, 7, 0.5);
        assert!(mask_difference(&a, &a).unwrap().is_empty());
        let ones = BinaryMask::filled(5, 5, true).unwrap();
        let zeros = BinaryMask::new(5, 5).unwrap();
        assert_eq!(mask_difference(&ones, &zeros).unwrap(), ones);
        let d = mask_difference(&a, &b).unwrap();
        for y in 0..7 {
            for x in 0..13 {
                assert_eq!(d.get(x, y), a.get(x, y) && !b.get(x, y));
            }
        }
        assert!(mask_difference(&a, &zeros).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = half(4, 4, true);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &half(4, 4, false)).unwrap(), 0.0);
        let top = BinaryMask::from_fn(4, 4, |_, y| y < 2).unwrap();
        assert!((iou(&a, &top).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let empty = BinaryMask::new(4, 4).unwrap();
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert!(iou(&a, &BinaryMask::new(3, 4).unwrap()).is_err());
    }

    #[test]
    fn distance_transform_examples() {
        let empty = BinaryMask::new(5, 4).unwrap();
        assert!(distance_transform(&empty).squared_values().iter().all(|&d| d == 0));

        let center = BinaryMask::from_fn(3, 3, |x, y| x == 1 && y == 1).unwrap();
        let d = distance_transform(&center);
        assert_eq!(d.get(1, 1), 1.0);
        assert_eq!(d.squared_values().iter().filter(|&&v| v != 0).count(), 1);

        let full = BinaryMask::filled(3, 3, true).unwrap();
        let d = distance_transform(&full);
        for y in 0..3 {
            for x in 0..3 {
                let expected = if (x, y) == (1, 1) { 2.0 } else { 1.0 };
                assert_eq!(d.get(x, y), expected, "at ({x}, {y})");
            }
        }
    }

    #[test]
    fn distance_transform_matches_brute_force_on_small_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let w = rng.random_range(1..=12);
            let h = rng.random_range(1..=12);
            let density = rng.random_range(0.0..1.0);
            let m = random_mask(&mut rng, w, h, density);
            assert_eq!(distance_transform(&m).squared_values(), brute_squared(&m).as_slice());
        }
    }

    #[test]
    fn distance_transform_on_long_thin_strip() {
        let strip = BinaryMask::filled(40, 1, true).unwrap();
        let d = distance_transform(&strip);
        assert!(d.squared_values().iter().all(|&v| v == 1));
        let block = BinaryMask::filled(9, 9, true).unwrap();
        assert_eq!(distance_transform(&block).get(4, 4), 5.0);
    }

    #[test]
    fn fraction_above_examples() {
        let full = BinaryMask::filled(4, 4, true).unwrap();
        let high = ProbabilityMap::constant(4, 4, 0.9).unwrap();
        let low = ProbabilityMap::constant(4, 4, 0.1).unwrap();
        assert_eq!(fraction_above(&full, &high, 0.5).unwrap(), 1.0);
        assert_eq!(fraction_above(&full, &low, 0.5).unwrap(), 0.0);
        let split = ProbabilityMap::from_fn(4, 4, |x, _| if x < 2 { 0.9 } else { 0.1 }).unwrap();
        assert_eq!(fraction_above(&full, &split, 0.5).unwrap(), 0.5);
        // strict inequality
        let at = ProbabilityMap::constant(4, 4, 0.5).unwrap();
        assert_eq!(fraction_above(&full, &at, 0.5).unwrap(), 0.0);
        assert!(matches!(
            fraction_above(&BinaryMask::new(4, 4).unwrap(), &high, 0.5),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn probability_map_rejects_out_of_range() {
        assert!(ProbabilityMap::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(ProbabilityMap::new(1, 2, vec![0.5, f32::NAN]).is_err());
        assert!(ProbabilityMap::new(1, 2, vec![0.5]).is_err());
    }

    #[test]
    fn label_map_validates() {
        assert!(LabelMap::new(2, 1, vec![0, 3], 3, 0).is_err());
        assert!(LabelMap::new(2, 1, vec![0, 1], 3, 3).is_err());
        let lm = LabelMap::new(2, 1, vec![0, 2], 3, 0).unwrap();
        assert_eq!(lm.class_mask(2).count(), 1);
        assert_eq!(lm.foreground_mask().iter_set().collect::<Vec<_>>(), vec![(1, 0)]);
    }

    #[test]
    fn components_and_erosion() {
        let m = BinaryMask::from_fn(7, 5, |x, y| (x < 2 && y < 2) || (x >= 4 && y >= 1)).unwrap();
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].count(), 4);
        assert_eq!(comps[1].count(), 12);
        // diagonal touch is not 4-connected
        let diag = BinaryMask::from_fn(2, 2, |x, y| x == y).unwrap();
        assert_eq!(connected_components(&diag).len(), 2);

        let block = BinaryMask::rect(6, 6, Rect::new(1, 1, 4, 4)).unwrap();
        assert_eq!(erode4(&block), BinaryMask::rect(6, 6, Rect::new(2, 2, 2, 2)).unwrap());
    }

    #[test]
    fn crop_paste_and_bounds() {
        let m = BinaryMask::rect(8, 6, Rect::new(2, 1, 3, 4)).unwrap();
        assert_eq!(m.bounding_rect(), Some(Rect::new(2, 1, 3, 4)));
        let c = m.crop(Rect::new(2, 0, 4, 6)).unwrap();
        let mut back = BinaryMask::new(8, 6).unwrap();
        back.paste(&c, (2, 0)).unwrap();
        assert_eq!(back, m);
        assert!(m.crop(Rect::new(6, 0, 4, 6)).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1u32..20, 1u32..20).prop_flat_map(|(w, h)| {
            let n = (w * h) as usize;
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(a, b)| {
                    (
                        BinaryMask::from_bools(w, h, &a).unwrap(),
                        BinaryMask::from_bools(w, h, &b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn iou_and_difference_identities((a, b) in arb_pair()) {
            prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
            if !a.is_empty() {
                prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
            }
            let inter = a.intersection_count(&b).unwrap();
            prop_assert_eq!(inter + mask_difference(&a, &b).unwrap().count(), a.count());
        }

        #[test]
        fn union_associative_and_idempotent((a, b) in arb_pair(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_mask(&mut rng, a.width(), a.height(), 0.5);
            let left = mask_union([&mask_union([&a, &b]).unwrap(), &c]).unwrap();
            let right = mask_union([&a, &mask_union([&b, &c]).unwrap()]).unwrap();
            prop_assert_eq!(left, right);
            prop_assert_eq!(mask_union([&a, &a]).unwrap(), a.clone());
            prop_assert_eq!(mask_union([&a, &b]).unwrap(), mask_union([&b, &a]).unwrap());
        }

        #[test]
        fn fraction_above_monotone_invariant(seed in any::<u64>(), t in 0.05f32..0.95) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mask = BinaryMask::from_fn(9, 9, |x, y| x + y > 2).unwrap();
            let p = ProbabilityMap::from_fn(9, 9, |_, _| rng.random_range(0.0..=1.0)).unwrap();
            // x -> x^2 is strictly increasing on [0, 1]
            let q = ProbabilityMap::new(9, 9, p.values().iter().map(|v| v * v).collect()).unwrap();
            prop_assert_eq!(
                fraction_above(&mask, &p, t).unwrap(),
                fraction_above(&mask, &q, t * t).unwrap()
            );
        }
    }
}
