//! Spatial bookkeeping: click grids, sliding windows and large-image tiles.

use serde::{Deserialize, Serialize};

use crate::clicks::{Click, ClickSet};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, LabelMap, ProbabilityMap, Rect};

/// `n * n` positive clicks at the cell centers of a uniform grid, row-major.
///
/// Coordinates are `floor((j + 0.5) * dim / n)`. When `n` exceeds a
/// dimension some clicks share a coordinate on that axis.
pub fn grid_clicks(width: u32, height: u32, n: u32) -> Result<ClickSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("grid side must be at least 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!("empty image {width}x{height}")));
    }
    let axis = |dim: u32| -> Vec<u32> {
        (0..n as u64)
            .map(|j| ((2 * j + 1) * dim as u64 / (2 * n as u64)) as u32)
            .collect()
    };
    let xs = axis(width);
    let ys = axis(height);
    let positives = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| Click::positive(x, y)))
        .collect();
    Ok(ClickSet::from_parts(positives, Vec::new()))
}

/// Overlapping square windows covering an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub rects: Vec<Rect>,
    pub image_w: u32,
    pub image_h: u32,
    pub window: u32,
    pub stride: u32,
}

fn window_offsets(dim: u32, window: u32, stride: u32) -> Vec<u32> {
    let mut offsets: Vec<u32> = (0..)
        .map(|k| k * stride)
        .take_while(|&o| o + window <= dim)
        .collect();
    let last = *offsets.last().expect("window fits, so offset 0 exists");
    if last + window < dim {
        offsets.push(dim - window);
    }
    offsets
}

/// Windows at multiples of `stride`, with a final row/column clamped flush to
/// the far edge when the remainder is not a stride multiple.
pub fn plan_windows(width: u32, height: u32, window: u32, stride: u32) -> Result<WindowPlan> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window and stride must be positive".into()));
    }
    if stride > window {
        return Err(Error::InvalidArgument(format!("stride {stride} exceeds window {window}")));
    }
    if window > width.min(height) {
        return Err(Error::InvalidArgument(format!(
            "window {window} larger than image {width}x{height}"
        )));
    }
    let xs = window_offsets(width, window, stride);
    let ys = window_offsets(height, window, stride);
    let rects = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| Rect::new(x, y, window, window)))
        .collect();
    Ok(WindowPlan {
        rects,
        image_w: width,
        image_h: height,
        window,
        stride,
    })
}

/// Per-pixel mean of the window partials covering each pixel.
pub fn aggregate_windows(partials: &[ProbabilityMap], plan: &WindowPlan) -> Result<ProbabilityMap> {
    if partials.len() != plan.rects.len() {
        return Err(Error::CountMismatch {
            what: "window partials",
            expected: plan.rects.len(),
            actual: partials.len(),
        });
    }
    let (w, h) = (plan.image_w as usize, plan.image_h as usize);
    let mut sum = vec![0f64; w * h];
    let mut count = vec![0u32; w * h];
    for (partial, rect) in partials.iter().zip(&plan.rects) {
        if partial.dims() != (rect.w, rect.h) {
            return Err(Error::dims((rect.w, rect.h), partial.dims()));
        }
        for dy in 0..rect.h {
            let row = (rect.y + dy) as usize * w;
            for dx in 0..rect.w {
                let i = row + (rect.x + dx) as usize;
                sum[i] += partial.get(dx, dy) as f64;
                count[i] += 1;
            }
        }
    }
    if count.contains(&0) {
        return Err(Error::InvalidArgument("window plan leaves pixels uncovered".into()));
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| (s / c as f64) as f32)
        .collect();
    ProbabilityMap::new(plan.image_w, plan.image_h, values)
}

/// Non-overlapping partition of an image into tiles of at most `cap` pixels
/// per side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub rects: Vec<Rect>,
    pub image_w: u32,
    pub image_h: u32,
    pub tile: u32,
}

pub fn plan_tiles(width: u32, height: u32, cap: u32) -> Result<TilePlan> {
    if cap == 0 {
        return Err(Error::InvalidArgument("tile cap must be at least 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!("empty image {width}x{height}")));
    }
    let spans = |dim: u32| -> Vec<(u32, u32)> {
        (0..dim.div_ceil(cap))
            .map(|k| (k * cap, cap.min(dim - k * cap)))
            .collect()
    };
    let xs = spans(width);
    let rects = spans(height)
        .into_iter()
        .flat_map(|(y, h)| xs.iter().map(move |&(x, w)| Rect::new(x, y, w, h)))
        .collect();
    Ok(TilePlan {
        rects,
        image_w: width,
        image_h: height,
        tile: cap,
    })
}

/// Cuts `mask` into one piece per tile.
pub fn split_tiles(mask: &BinaryMask, plan: &TilePlan) -> Result<Vec<BinaryMask>> {
    mask.ensure_same_dims((plan.image_w, plan.image_h))?;
    plan.rects.iter().map(|r| mask.crop(*r)).collect()
}

/// Pastes each tile's mask back into its rectangle.
pub fn merge_tiles(tile_masks: &[BinaryMask], plan: &TilePlan) -> Result<BinaryMask> {
    if tile_masks.len() != plan.rects.len() {
        return Err(Error::CountMismatch {
            what: "tile masks",
            expected: plan.rects.len(),
            actual: tile_masks.len(),
        });
    }
    let mut out = BinaryMask::new(plan.image_w, plan.image_h)?;
    for (mask, rect) in tile_masks.iter().zip(&plan.rects) {
        mask.ensure_same_dims((rect.w, rect.h))?;
        out.paste(mask, (rect.x, rect.y))?;
    }
    Ok(out)
}

/// Places a tile-local mask into an otherwise empty full-size mask.
pub fn lift_tile_mask(mask: &BinaryMask, rect: Rect, image_w: u32, image_h: u32) -> Result<BinaryMask> {
    mask.ensure_same_dims((rect.w, rect.h))?;
    let mut out = BinaryMask::new(image_w, image_h)?;
    out.paste(mask, (rect.x, rect.y))?;
    Ok(out)
}

/// Size of an image rescaled so its long side equals `long_side`.
/// `long_side == 0` keeps the native size.
pub fn scaled_size(width: u32, height: u32, long_side: u32) -> (u32, u32) {
    if long_side == 0 {
        return (width, height);
    }
    let long = width.max(height) as f64;
    let scale = long_side as f64 / long;
    let fit = |d: u32| ((d as f64 * scale).round() as u32).clamp(1, long_side);
    if width >= height {
        (long_side, fit(height))
    } else {
        (fit(width), long_side)
    }
}

#[inline]
fn nearest_source(dst: u32, dst_len: u32, src_len: u32) -> u32 {
    // sample at pixel centers
    let s = ((2 * dst as u64 + 1) * src_len as u64) / (2 * dst_len as u64);
    (s as u32).min(src_len - 1)
}

/// Nearest-neighbor resampling; probabilities are copied, never blended.
pub fn resample_nearest(map: &ProbabilityMap, width: u32, height: u32) -> Result<ProbabilityMap> {
    if map.dims() == (width, height) {
        return Ok(map.clone());
    }
    let (sw, sh) = map.dims();
    ProbabilityMap::from_fn(width, height, |x, y| {
        map.get(nearest_source(x, width, sw), nearest_source(y, height, sh))
    })
}

pub fn resample_labels_nearest(labels: &LabelMap, width: u32, height: u32) -> Result<LabelMap> {
    let (sw, sh) = labels.dims();
    let mut v = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        for x in 0..width {
            v.push(labels.get(nearest_source(x, width, sw), nearest_source(y, height, sh)));
        }
    }
    LabelMap::new(width, height, v, labels.class_count(), labels.background())
}

pub fn resample_mask_nearest(mask: &BinaryMask, width: u32, height: u32) -> Result<BinaryMask> {
    let (sw, sh) = mask.dims();
    BinaryMask::from_fn(width, height, |x, y| {
        mask.get(nearest_source(x, width, sw), nearest_source(y, height, sh))
    })
}
