//! Mask, label and probability-map file formats.
//!
//! Masks are 8-bit single-channel PNGs (0 = background, 255 = foreground; any
//! nonzero value reads as foreground). Label maps use the same encoding with
//! the pixel value holding the class index. Probability maps use a small
//! little-endian binary container:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PMAP"
//! 4       4     width  (u32)
//! 8       4     height (u32)
//! 12      4     reserved (u32, written as 0)
//! 16      4*n   f32 values, row-major
//! ```

use std::io::{Cursor, Read, Write};
use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, LabelMap, ProbabilityMap};

pub const PMAP_MAGIC: &[u8; 4] = b"PMAP";
pub const PMAP_HEADER_LEN: usize = 16;

pub fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
        Luma([if mask.get(x, y) { 255 } else { 0 }])
    })
}

pub fn mask_from_gray(img: &GrayImage) -> Result<BinaryMask> {
    BinaryMask::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y)[0] != 0)
}

pub fn encode_png_gray(img: &GrayImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn encode_png_rgb(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    encode_png_gray(&mask_to_gray(mask))
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.into_luma8();
    mask_from_gray(&img)
}

pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage> {
    Ok(image::load_from_memory_with_format(bytes, ImageFormat::Png)?.into_rgb8())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    let img = image::load_from_memory(&bytes)?.into_luma8();
    mask_from_gray(&img)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_mask_png(mask)?;
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(image::load_from_memory(&bytes)?.into_rgb8())
}

pub fn write_rgb(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png_rgb(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Reads a label PNG; pixel value = class index.
pub fn read_label_map(path: impl AsRef<Path>, class_count: u32, background: u32) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    let img = image::load_from_memory(&bytes)?.into_luma8();
    let labels = img.pixels().map(|p| p[0] as u32).collect();
    LabelMap::new(img.width(), img.height(), labels, class_count, background)
}

pub fn write_label_map(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    if labels.class_count() > 256 {
        return Err(Error::InvalidArgument(format!(
            "{} classes do not fit an 8-bit label PNG",
            labels.class_count()
        )));
    }
    let img = GrayImage::from_fn(labels.width(), labels.height(), |x, y| {
        Luma([labels.get(x, y) as u8])
    });
    let path = path.as_ref();
    let bytes = encode_png_gray(&img)?;
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn write_pmap<W: Write>(mut out: W, map: &ProbabilityMap) -> Result<()> {
    out.write_all(PMAP_MAGIC)?;
    out.write_all(&map.width().to_le_bytes())?;
    out.write_all(&map.height().to_le_bytes())?;
    out.write_all(&0u32.to_le_bytes())?;
    out.write_all(&f32s_to_le_bytes(map.values()))?;
    Ok(())
}

pub fn read_pmap<R: Read>(mut input: R) -> Result<ProbabilityMap> {
    let mut header = [0u8; PMAP_HEADER_LEN];
    input.read_exact(&mut header)?;
    if &header[0..4] != PMAP_MAGIC {
        return Err(Error::parse(0, "missing PMAP magic"));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
    let (width, height) = (word(4), word(8));
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let expected = width as usize * height as usize * 4;
    if body.len() != expected {
        return Err(Error::parse(
            PMAP_HEADER_LEN,
            format!("expected {expected} payload bytes for {width}x{height}, found {}", body.len()),
        ));
    }
    ProbabilityMap::new(width, height, f32s_from_le_bytes(&body)?)
}

pub fn f32s_to_le_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f32s_from_le_bytes(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::parse(bytes.len(), "float payload not a multiple of 4 bytes"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect())
}
