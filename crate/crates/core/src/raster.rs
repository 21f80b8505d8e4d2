//! Single-channel float images and the resampling helpers shared by the
//! data pipeline, the flow tools and evaluation.

use crate::error::{Error, Result};

/// Row-major single-channel image.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// Axis-aligned crop rectangle in source pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f32,
    pub y: f32,
    pub width: f32,
    pub height: f32,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} plane needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Plane) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Bilinear sample with border clamping.
    pub fn sample(&self, x: f32, y: f32) -> f32 {
        bilinear(&self.data, self.width, self.height, x, y)
    }

    /// Bilinear resample of `rect` to `width x height`, pixel centers aligned.
    pub fn crop_resize(&self, rect: Rect, width: usize, height: usize) -> Plane {
        resample(&self.data, self.width, self.height, rect, width, height)
    }

    pub fn flip_horizontal(&self) -> Plane {
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.width) {
            row.reverse();
        }
        out
    }

    pub fn flip_vertical(&self) -> Plane {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width).rev() {
            data.extend_from_slice(row);
        }
        Plane { data, ..*self }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Rect {
    pub fn full(width: usize, height: usize) -> Self {
        Rect {
            x: 0.0,
            y: 0.0,
            width: width as f32,
            height: height as f32,
        }
    }
}

pub(crate) fn bilinear(data: &[f32], width: usize, height: usize, x: f32, y: f32) -> f32 {
    let x = x.clamp(0.0, (width - 1) as f32);
    let y = y.clamp(0.0, (height - 1) as f32);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f32;
    let fy = y - y0 as f32;
    let top = data[y0 * width + x0] * (1.0 - fx) + data[y0 * width + x1] * fx;
    let bottom = data[y1 * width + x0] * (1.0 - fx) + data[y1 * width + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

pub(crate) fn resample(
    data: &[f32],
    src_w: usize,
    src_h: usize,
    rect: Rect,
    width: usize,
    height: usize,
) -> Plane {
    let sx = rect.width / width as f32;
    let sy = rect.height / height as f32;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let py = rect.y + (y as f32 + 0.5) * sy - 0.5;
        for x in 0..width {
            let px = rect.x + (x as f32 + 0.5) * sx - 0.5;
            out.push(bilinear(data, src_w, src_h, px, py));
        }
    }
    Plane {
        width,
        height,
        data: out,
    }
}

/// ITU-R BT.601 luma.
#[inline]
pub fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Three planes (R, G, B) of equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorFrame {
    pub channels: [Plane; 3],
}

impl ColorFrame {
    pub fn from_gray(p: &Plane) -> Self {
        ColorFrame {
            channels: [p.clone(), p.clone(), p.clone()],
        }
    }

    pub fn width(&self) -> usize {
        self.channels[0].width
    }

    pub fn height(&self) -> usize {
        self.channels[0].height
    }

    pub fn to_gray(&self) -> Plane {
        let [r, g, b] = &self.channels;
        Plane {
            width: r.width,
            height: r.height,
            data: r
                .data
                .iter()
                .zip(&g.data)
                .zip(&b.data)
                .map(|((&r, &g), &b)| luma(r, g, b))
                .collect(),
        }
    }
}
