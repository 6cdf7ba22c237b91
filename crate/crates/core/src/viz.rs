//! Raster overlays: masks as tints, clicks as dots.
//!
//! All blending is integer arithmetic so output is bit-stable across
//! platforms.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::clicks::{Click, ClickExportRecord, Polarity};
use crate::error::{Error, Result};
use crate::io::{read_mask, read_rgb, write_rgb};
use crate::raster::{BinaryMask, LabelMap};

pub const POSITIVE: [u8; 3] = [0, 255, 0];
pub const NEGATIVE: [u8; 3] = [255, 0, 0];
pub const MASK_TINT: [u8; 3] = [0, 120, 255];

const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

/// Color of class `class`; the table repeats past twelve classes.
pub fn palette(class: u32) -> [u8; 3] {
    PALETTE[class as usize % PALETTE.len()]
}

fn blend(px: &mut Rgb<u8>, color: [u8; 3]) {
    for (c, t) in px.0.iter_mut().zip(color) {
        *c = ((*c as u16 + t as u16) / 2) as u8;
    }
}

/// Half-strength tint of every mask pixel.
pub fn tint_mask(image: &mut RgbImage, mask: &BinaryMask, color: [u8; 3]) -> Result<()> {
    mask.ensure_same_dims(image.dimensions())?;
    for (x, y) in mask.iter_set() {
        blend(image.get_pixel_mut(x, y), color);
    }
    Ok(())
}

/// Tints each non-background pixel with its class color.
pub fn tint_labels(image: &mut RgbImage, labels: &LabelMap) -> Result<()> {
    if labels.dims() != image.dimensions() {
        return Err(Error::dims(image.dimensions(), labels.dims()));
    }
    for (x, y, px) in image.enumerate_pixels_mut() {
        let c = labels.get(x, y);
        if c != labels.background() {
            blend(px, palette(c));
        }
    }
    Ok(())
}

/// Dot radius scaled to the image, at least one pixel.
pub fn dot_radius(width: u32, height: u32) -> u32 {
    (width.min(height) / 64).max(1)
}

/// Filled disk at the click, clipped to the image.
pub fn draw_click(image: &mut RgbImage, click: Click, radius: u32) {
    let color = match click.polarity {
        Polarity::Positive => POSITIVE,
        Polarity::Negative => NEGATIVE,
    };
    let r = radius as i64;
    let (w, h) = (image.width() as i64, image.height() as i64);
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (click.x as i64 + dx, click.y as i64 + dy);
            if dx * dx + dy * dy <= r * r && (0..w).contains(&x) && (0..h).contains(&y) {
                image.put_pixel(x as u32, y as u32, Rgb(color));
            }
        }
    }
}

/// Image with an optional mask tint and click dots on top.
pub fn render_overlay(image: &RgbImage, mask: Option<&BinaryMask>, clicks: &[Click]) -> Result<RgbImage> {
    let mut out = image.clone();
    if let Some(m) = mask {
        tint_mask(&mut out, m, MASK_TINT)?;
    }
    let r = dot_radius(out.width(), out.height());
    for &c in clicks {
        draw_click(&mut out, c, r);
    }
    Ok(out)
}

pub fn render_labels(image: &RgbImage, labels: &LabelMap) -> Result<RgbImage> {
    let mut out = image.clone();
    tint_labels(&mut out, labels)?;
    Ok(out)
}

/// One overlay per trace step: the clicks placed so far over the tinted mask.
pub fn render_trace(image: &RgbImage, mask: Option<&BinaryMask>, record: &ClickExportRecord) -> Result<Vec<RgbImage>> {
    let clicks = record.ordered_clicks();
    (1..=clicks.len())
        .map(|k| render_overlay(image, mask, &clicks[..k]))
        .collect()
}

/// Writes `<out_dir>/<line:05>_step<k>.png` for every record of a click
/// export. Returns the written paths.
pub fn render_trace_file(jsonl: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(jsonl).map_err(|e| Error::file(jsonl, e))?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let mut written = Vec::new();
    for (line_no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let record: ClickExportRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: line_no + 1,
            message: e.to_string(),
        })?;
        let image = read_rgb(&record.image)?;
        let mask = record.gt_mask.as_ref().map(read_mask).transpose()?;
        for (k, overlay) in render_trace(&image, mask.as_ref(), &record)?.iter().enumerate() {
            let path = out_dir.join(format!("{line_no:05}_step{}.png", k + 1));
            write_rgb(&path, overlay)?;
            written.push(path);
        }
    }
    Ok(written)
}
