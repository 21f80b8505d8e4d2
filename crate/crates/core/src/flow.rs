use crate::error::{Error, Result};
use crate::raster::{Plane, Rect};

/// Dense displacement field in pixels with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub valid: Vec<bool>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n || valid.len() != n {
            return Err(Error::Shape(format!(
                "{width}x{height} flow needs {n} values per channel, got u={} v={} valid={}",
                u.len(),
                v.len(),
                valid.len()
            )));
        }
        Ok(FlowField {
            width,
            height,
            u,
            v,
            valid,
        })
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        let n = width * height;
        FlowField {
            width,
            height,
            u: vec![u; n],
            v: vec![v; n],
            valid: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&m| m).count()
    }

    pub fn same_shape(&self, other: &FlowField) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Crop `rect` and resize to `width x height`; vectors are rescaled by the
    /// per-axis scale factor. A target pixel is valid only when every source
    /// pixel feeding its bilinear sample is valid.
    pub fn crop_resize(&self, rect: Rect, width: usize, height: usize) -> FlowField {
        let sx = width as f32 / rect.width;
        let sy = height as f32 / rect.height;
        let u = crate::raster::resample(&self.u, self.width, self.height, rect, width, height);
        let v = crate::raster::resample(&self.v, self.width, self.height, rect, width, height);
        let mask: Vec<f32> = self.valid.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let m = crate::raster::resample(&mask, self.width, self.height, rect, width, height);
        FlowField {
            width,
            height,
            u: u.data.iter().map(|x| x * sx).collect(),
            v: v.data.iter().map(|x| x * sy).collect(),
            valid: m.data.iter().map(|&x| x > 1.0 - 1e-4).collect(),
        }
    }

    /// Mirror left-right; u changes sign.
    pub fn flip_horizontal(&self) -> FlowField {
        let flip = |d: &[f32], neg: bool| -> Vec<f32> {
            d.chunks_exact(self.width)
                .flat_map(|row| row.iter().rev().map(move |&x| if neg { -x } else { x }))
                .collect()
        };
        FlowField {
            width: self.width,
            height: self.height,
            u: flip(&self.u, true),
            v: flip(&self.v, false),
            valid: self
                .valid
                .chunks_exact(self.width)
                .flat_map(|row| row.iter().rev().copied())
                .collect(),
        }
    }

    /// Mirror top-bottom; v changes sign.
    pub fn flip_vertical(&self) -> FlowField {
        let flip = |d: &[f32], neg: bool| -> Vec<f32> {
            d.chunks_exact(self.width)
                .rev()
                .flat_map(|row| row.iter().map(move |&x| if neg { -x } else { x }))
                .collect()
        };
        FlowField {
            width: self.width,
            height: self.height,
            u: flip(&self.u, false),
            v: flip(&self.v, true),
            valid: self.valid.chunks_exact(self.width).rev().flatten().copied().collect(),
        }
    }

    /// Backward-warp `next` with this flow: `out(p) = next(p + flow(p))`.
    /// Returns the warped plane and a mask of pixels whose target stays inside the image.
    pub fn warp(&self, next: &Plane) -> Result<(Plane, Vec<bool>)> {
        if next.width != self.width || next.height != self.height {
            return Err(Error::Shape("flow and image sizes differ".into()));
        }
        let mut data = Vec::with_capacity(self.len());
        let mut inside = Vec::with_capacity(self.len());
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                let tx = x as f32 + self.u[i];
                let ty = y as f32 + self.v[i];
                inside.push(
                    tx >= 0.0 && ty >= 0.0 && tx <= (self.width - 1) as f32 && ty <= (self.height - 1) as f32,
                );
                data.push(next.sample(tx, ty));
            }
        }
        Ok((Plane::new(self.width, self.height, data)?, inside))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hflip_negates_u() {
        let f = FlowField::constant(4, 2, 3.0, 1.0).flip_horizontal();
        assert!(f.u.iter().all(|&u| u == -3.0));
        assert!(f.v.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn vflip_negates_v() {
        let f = FlowField::constant(4, 2, 3.0, 1.0).flip_vertical();
        assert!(f.u.iter().all(|&u| u == 3.0));
        assert!(f.v.iter().all(|&v| v == -1.0));
    }

    #[test]
    fn downscale_halves_vectors() {
        let f = FlowField::constant(8, 4, 2.0, -4.0);
        let g = f.crop_resize(Rect::full(8, 4), 4, 2);
        assert!(g.u.iter().all(|&u| (u - 1.0).abs() < 1e-6));
        assert!(g.v.iter().all(|&v| (v + 2.0).abs() < 1e-6));
        assert_eq!(g.valid_count(), 8);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(FlowField::new(2, 2, vec![0.0; 4], vec![0.0; 3], vec![true; 4]).is_err());
    }
}
