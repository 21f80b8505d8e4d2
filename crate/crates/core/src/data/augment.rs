use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Rect;

use super::sample::{RawSample, Target};

/// Augmentation switches and the output size every sample is resampled to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub out_width: usize,
    pub out_height: usize,
    pub random_crop: bool,
    pub hflip: bool,
    pub vflip: bool,
    /// Only honored for interpolation samples.
    pub temporal_reversal: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            out_width: 384,
            out_height: 192,
            random_crop: true,
            hflip: true,
            vflip: true,
            temporal_reversal: true,
        }
    }
}

impl AugmentConfig {
    /// Deterministic center crop to the output size with no flips.
    pub fn identity(out_width: usize, out_height: usize) -> Self {
        AugmentConfig {
            out_width,
            out_height,
            random_crop: false,
            hflip: false,
            vflip: false,
            temporal_reversal: false,
        }
    }
}

/// The concrete transform applied to one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub crop: [f32; 4],
    pub hflip: bool,
    pub vflip: bool,
    pub reversed: bool,
    /// The source was smaller than the output and had to be upscaled.
    pub upscaled: bool,
}

impl AugmentPlan {
    pub fn crop_rect(&self) -> Rect {
        let [x, y, width, height] = self.crop;
        Rect { x, y, width, height }
    }

    /// Draw a crop of the output aspect ratio, width uniform between the output
    /// width and the largest crop that fits, position uniform; then the flips.
    pub fn draw(src_w: usize, src_h: usize, cfg: &AugmentConfig, flow: bool, rng: &mut impl Rng) -> AugmentPlan {
        let aspect = cfg.out_width as f32 / cfg.out_height as f32;
        let max_w = (src_w as f32).min(src_h as f32 * aspect);
        let upscaled = max_w < cfg.out_width as f32;
        let width = if cfg.random_crop && !upscaled {
            rng.random_range(cfg.out_width as f32..=max_w)
        } else {
            max_w
        };
        let height = width / aspect;
        let (x, y) = if cfg.random_crop {
            (
                rng.random_range(0.0..=src_w as f32 - width),
                rng.random_range(0.0..=src_h as f32 - height),
            )
        } else {
            ((src_w as f32 - width) / 2.0, (src_h as f32 - height) / 2.0)
        };
        AugmentPlan {
            crop: [x, y, width, height],
            hflip: cfg.hflip && rng.random_bool(0.5),
            vflip: cfg.vflip && rng.random_bool(0.5),
            reversed: !flow && cfg.temporal_reversal && rng.random_bool(0.5),
            upscaled,
        }
    }
}

/// Crop and resize every frame (and flow) of `raw` identically, then flip and,
/// for interpolation samples, reverse the input order.
pub fn apply_plan(raw: &RawSample, plan: &AugmentPlan, out_w: usize, out_h: usize) -> Result<RawSample> {
    let rect = plan.crop_rect();
    let frame = |p: &crate::raster::Plane| {
        let mut q = p.crop_resize(rect, out_w, out_h);
        if plan.hflip {
            q = q.flip_horizontal();
        }
        if plan.vflip {
            q = q.flip_vertical();
        }
        q
    };
    let mut inputs: Vec<_> = raw.inputs.iter().map(frame).collect();
    let target = match &raw.target {
        Target::Frame(p) => Target::Frame(frame(p)),
        Target::Flow(f) => {
            if plan.reversed {
                return Err(Error::Input("flow samples cannot be temporally reversed".into()));
            }
            let mut g = f.crop_resize(rect, out_w, out_h);
            if plan.hflip {
                g = g.flip_horizontal();
            }
            if plan.vflip {
                g = g.flip_vertical();
            }
            Target::Flow(g)
        }
    };
    if plan.reversed {
        inputs.reverse();
    }
    Ok(RawSample {
        spec: raw.spec,
        inputs,
        target,
    })
}

fn augment(raw: &RawSample, cfg: &AugmentConfig, flow: bool, rng: &mut impl Rng) -> Result<(RawSample, AugmentPlan)> {
    let first = raw
        .inputs
        .first()
        .ok_or_else(|| Error::Input("sample has no input frames".into()))?;
    let plan = AugmentPlan::draw(first.width, first.height, cfg, flow, rng);
    if plan.upscaled {
        log::warn!(
            "source {}x{} is smaller than the {}x{} output; upscaling before the crop",
            first.width,
            first.height,
            cfg.out_width,
            cfg.out_height
        );
    }
    Ok((apply_plan(raw, &plan, cfg.out_width, cfg.out_height)?, plan))
}

/// Random crop, flips and temporal reversal for an interpolation sample.
pub fn augment_interpolation(
    raw: &RawSample,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<(RawSample, AugmentPlan)> {
    if !matches!(raw.target, Target::Frame(_)) {
        return Err(Error::Input("augment_interpolation needs a frame target".into()));
    }
    augment(raw, cfg, false, rng)
}

/// Random crop and flips for a flow sample; vectors follow the geometry.
pub fn augment_flow(raw: &RawSample, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<(RawSample, AugmentPlan)> {
    if !matches!(raw.target, Target::Flow(_)) {
        return Err(Error::Input("augment_flow needs a flow target".into()));
    }
    augment(raw, cfg, true, rng)
}
