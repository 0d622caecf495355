//! PNG codecs for depth, color and mask images.
//!
//! Depth PNGs are 16-bit grayscale; pixel values pass through unchanged as
//! raw sensor units (the pipeline multiplies by `depth_scale_mm`, 1.0 by
//! default, so one unit is one millimetre). Zero means "no measurement".
//! Color PNGs are 8-bit RGB, mapped to [0, 1]. Masks are 8- or 16-bit
//! grayscale with 0 as background and any other value as a label.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::geometry::{BinaryMask, ColorImage, DepthImage};
use crate::io::atomic_write;

fn decode(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| Error::ImageDecode(e.to_string()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn decode_depth_png(bytes: &[u8]) -> Result<DepthImage> {
    match decode(bytes)? {
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            DepthImage::new(w as usize, h as usize, img.into_raw().into_iter().map(f64::from).collect())
        }
        other => Err(Error::ImageFormat(format!(
            "depth PNG must be 16-bit grayscale, found {:?}",
            other.color()
        ))),
    }
}

pub fn decode_color_png(bytes: &[u8]) -> Result<ColorImage> {
    match decode(bytes)? {
        DynamicImage::ImageRgb8(img) => {
            let (w, h) = img.dimensions();
            let values = img
                .pixels()
                .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
                .collect();
            ColorImage::new(w as usize, h as usize, values)
        }
        other => Err(Error::ImageFormat(format!(
            "color PNG must be 8-bit RGB, found {:?}",
            other.color()
        ))),
    }
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask> {
    let (w, h, values): (u32, u32, Vec<u32>) = match decode(bytes)? {
        DynamicImage::ImageLuma8(img) => (img.width(), img.height(), img.into_raw().into_iter().map(u32::from).collect()),
        DynamicImage::ImageLuma16(img) => (img.width(), img.height(), img.into_raw().into_iter().map(u32::from).collect()),
        other => {
            return Err(Error::ImageFormat(format!(
                "mask PNG must be 8- or 16-bit grayscale, found {:?}",
                other.color()
            )))
        }
    };
    BinaryMask::new(w as usize, h as usize, values)
}

pub fn read_depth_png(path: &Path) -> Result<DepthImage> {
    decode_depth_png(&read(path)?)
}

pub fn read_color_png(path: &Path) -> Result<ColorImage> {
    decode_color_png(&read(path)?)
}

pub fn read_mask_png(path: &Path) -> Result<BinaryMask> {
    decode_mask_png(&read(path)?)
}

fn encode(img: DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::ImageFormat(e.to_string()))?;
    Ok(out.into_inner())
}

fn dims(w: usize, h: usize) -> Result<(u32, u32)> {
    match (u32::try_from(w), u32::try_from(h)) {
        (Ok(w), Ok(h)) => Ok((w, h)),
        _ => Err(Error::InvalidInput(format!("image size {w}x{h} too large"))),
    }
}

/// Depth values must be integers in `0..=65535`.
pub fn encode_depth_png(depth: &DepthImage) -> Result<Vec<u8>> {
    let (w, h) = dims(depth.width, depth.height)?;
    let raw = depth
        .values
        .iter()
        .map(|&v| {
            if (0.0..=65535.0).contains(&v) && v.fract() == 0.0 {
                Ok(v as u16)
            } else {
                Err(Error::InvalidInput(format!("depth value {v} not representable in 16 bits")))
            }
        })
        .collect::<Result<Vec<u16>>>()?;
    let img = ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).expect("buffer sized from image");
    encode(DynamicImage::ImageLuma16(img))
}

/// Channels are rounded to the nearest 8-bit level.
pub fn encode_color_png(color: &ColorImage) -> Result<Vec<u8>> {
    let (w, h) = dims(color.width, color.height)?;
    let raw: Vec<u8> = color
        .values
        .iter()
        .flatten()
        .map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("buffer sized from image");
    encode(DynamicImage::ImageRgb8(img))
}

/// 8-bit when every label fits, 16-bit otherwise.
pub fn encode_mask_png(mask: &BinaryMask) -> Result<Vec<u8>> {
    let (w, h) = dims(mask.width, mask.height)?;
    let max = mask.values.iter().copied().max().unwrap_or(0);
    if max <= u8::MAX as u32 {
        let raw = mask.values.iter().map(|&v| v as u8).collect();
        encode(DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).expect("buffer sized from image"),
        ))
    } else if max <= u16::MAX as u32 {
        let raw = mask.values.iter().map(|&v| v as u16).collect();
        encode(DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).expect("buffer sized from image"),
        ))
    } else {
        Err(Error::InvalidInput(format!("mask label {max} exceeds 16 bits")))
    }
}

pub fn write_depth_png(path: &Path, depth: &DepthImage) -> Result<()> {
    atomic_write(path, &encode_depth_png(depth)?)
}

pub fn write_color_png(path: &Path, color: &ColorImage) -> Result<()> {
    atomic_write(path, &encode_color_png(color)?)
}

pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    atomic_write(path, &encode_mask_png(mask)?)
}
