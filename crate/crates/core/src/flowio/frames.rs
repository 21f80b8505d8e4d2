use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb};

use super::color::RgbImage;
use crate::error::{Error, Result};
use crate::raster::{luma, ColorFrame, Plane};

fn open(path: &Path) -> Result<image::RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(image::load_from_memory(&bytes)?.to_rgb8())
}

/// Load an image as [0, 1] RGB planes.
pub fn read_color_frame(path: impl AsRef<Path>) -> Result<ColorFrame> {
    let img = open(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let chan = |c: usize| Plane {
        width: w,
        height: h,
        data: img.pixels().map(|p| p.0[c] as f32 / 255.0).collect(),
    };
    Ok(ColorFrame {
        channels: [chan(0), chan(1), chan(2)],
    })
}

/// Load an image as [0, 1] BT.601 luma.
pub fn read_gray_frame(path: impl AsRef<Path>) -> Result<Plane> {
    let img = open(path.as_ref())?;
    Ok(Plane {
        width: img.width() as usize,
        height: img.height() as usize,
        data: img
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(|c| c as f32 / 255.0);
                luma(r, g, b)
            })
            .collect(),
    })
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Save a [0, 1] plane as 8-bit grayscale PNG (values clamped).
pub fn write_gray_png(path: impl AsRef<Path>, plane: &Plane) -> Result<()> {
    let img: GrayImage = ImageBuffer::from_fn(plane.width as u32, plane.height as u32, |x, y| {
        Luma([to_u8(plane.get(x as usize, y as usize))])
    });
    img.save(path.as_ref())?;
    Ok(())
}

pub fn write_rgb_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .ok_or_else(|| Error::Shape("RGB buffer does not match its size".into()))?;
    buf.save(path.as_ref())?;
    Ok(())
}

/// Quantize [0, 1] planes to an 8-bit RGB image (values clamped).
pub fn color_frame_to_rgb(frame: &ColorFrame) -> RgbImage {
    let [r, g, b] = &frame.channels;
    RgbImage {
        width: frame.width(),
        height: frame.height(),
        data: r
            .data
            .iter()
            .zip(&g.data)
            .zip(&b.data)
            .flat_map(|((&r, &g), &b)| [to_u8(r), to_u8(g), to_u8(b)])
            .collect(),
    }
}

pub fn write_color_png(path: impl AsRef<Path>, frame: &ColorFrame) -> Result<()> {
    write_rgb_png(path, &color_frame_to_rgb(frame))
}
