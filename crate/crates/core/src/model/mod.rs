//! The hourglass encoder-decoder and the CPU kernels it runs on.

mod network;
mod ops;
mod spec;
mod tensor;

pub use network::{ActivationShape, BlockChannels, Mode, Network, Param};
pub use spec::{check_resolution, Head, NetworkSpec, Skip, DECODER_BLOCKS, ENCODER_BLOCKS, RESOLUTION_MULTIPLE};
pub use tensor::Tensor;

use crate::data::normalize_frames;
use crate::error::{Error, Result};
use crate::raster::{ColorFrame, Plane};

/// Predict the center frame of a grayscale quadruple given in intensity units.
/// Inputs are normalized jointly; the prediction is mapped back with the same stats.
pub fn interpolate_gray(net: &Network, frames: &[Plane]) -> Result<Plane> {
    if net.head() != Head::Interpolation {
        return Err(Error::State("interpolation needs an interpolation-head network".into()));
    }
    let (normalized, stats) = normalize_frames(frames)?;
    let (w, h) = (normalized[0].width, normalized[0].height);
    let planes: Vec<&[f32]> = normalized.iter().map(|p| &p.data[..]).collect();
    let x = Tensor::from_planes(&planes, h, w)?;
    let y = net.infer(&x)?;
    Plane::new(w, h, y.plane(0, 0).iter().map(|&v| stats.denormalize(v)).collect())
}

/// Run the grayscale network independently on each color channel.
pub fn interpolate_color(net: &Network, frames: &[ColorFrame]) -> Result<ColorFrame> {
    if net.head() != Head::Interpolation {
        return Err(Error::State("interpolation needs an interpolation-head network".into()));
    }
    let channel = |c: usize| -> Result<Plane> {
        let planes: Vec<Plane> = frames.iter().map(|f| f.channels[c].clone()).collect();
        interpolate_gray(net, &planes)
    };
    Ok(ColorFrame {
        channels: [channel(0)?, channel(1)?, channel(2)?],
    })
}
