use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial downsampling factor of the encoder (five 2x max-pools).
pub const RESOLUTION_MULTIPLE: usize = 32;

pub const ENCODER_BLOCKS: usize = 5;
pub const DECODER_BLOCKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// One output channel: the predicted center frame.
    Interpolation,
    /// Two output channels: (u, v) displacement in pixels.
    Flow,
}

impl Head {
    pub fn channels(self) -> usize {
        match self {
            Head::Interpolation => 1,
            Head::Flow => 2,
        }
    }
}

/// A side channel: the pre-pool output of an encoder block concatenated onto
/// the upsampled input of a decoder block at the same resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    /// 0-based encoder block (0 = Conv1).
    pub encoder: usize,
    /// 0-based decoder position in execution order (0 = Dec5, 4 = Dec1).
    pub decoder: usize,
    pub channels: usize,
}

/// Declarative layer plan of the hourglass network.
///
/// Channel counts follow the block table of the architecture: encoder block
/// outputs, the bottleneck width, and the declared input width of every
/// decoder block. Transposed convolutions emit `upsample_channels`, chosen so
/// that upsampled + skip channels equal the next decoder's declared input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n_input_frames: usize,
    /// Output width of Conv1..Conv5; every conv inside a block has this width.
    pub conv_block_channels: Vec<usize>,
    pub bottleneck_channels: usize,
    /// Width of the convolutions inside Dec5..Dec1 (Dec1: the conv before the head).
    pub decoder_conv_channels: Vec<usize>,
    /// Declared input width of Dec5..Dec1 (post-concatenation).
    pub decoder_input_channels: Vec<usize>,
    /// Output width of the transposed convs: bottleneck, Dec5, Dec4, Dec3, Dec2.
    pub upsample_channels: Vec<usize>,
    pub skip_plan: Vec<Skip>,
    pub head: Head,
    pub leaky_relu_slope: f32,
    /// (width, height) in pixels.
    pub input_resolution: (usize, usize),
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self::full_size()
    }
}

impl NetworkSpec {
    /// Full-size network with the published block widths, 384x192 input.
    pub fn full_size() -> Self {
        NetworkSpec {
            n_input_frames: 4,
            conv_block_channels: vec![128, 128, 256, 256, 512],
            bottleneck_channels: 1024,
            decoder_conv_channels: vec![1024, 512, 512, 256, 128],
            decoder_input_channels: vec![1024, 1024, 512, 512, 256],
            upsample_channels: vec![512, 768, 256, 384, 128],
            skip_plan: (0..ENCODER_BLOCKS)
                .map(|d| {
                    let encoder = ENCODER_BLOCKS - 1 - d;
                    Skip {
                        encoder,
                        decoder: d,
                        channels: [128, 128, 256, 256, 512][encoder],
                    }
                })
                .collect(),
            head: Head::Interpolation,
            leaky_relu_slope: 0.1,
            input_resolution: (384, 192),
        }
    }

    /// Divide every internal channel count by `divisor` (input frames and head
    /// are untouched). Used for desk-scale experiments.
    pub fn narrowed(&self, divisor: usize) -> Result<Self> {
        if divisor == 0 {
            return Err(Error::Input("channel divisor must be positive".into()));
        }
        let div = |c: usize| -> Result<usize> {
            if c % divisor != 0 || c / divisor == 0 {
                Err(Error::Construction(format!(
                    "channel count {c} is not divisible by {divisor}"
                )))
            } else {
                Ok(c / divisor)
            }
        };
        let divs = |v: &[usize]| v.iter().map(|&c| div(c)).collect::<Result<Vec<_>>>();
        let spec = NetworkSpec {
            conv_block_channels: divs(&self.conv_block_channels)?,
            bottleneck_channels: div(self.bottleneck_channels)?,
            decoder_conv_channels: divs(&self.decoder_conv_channels)?,
            decoder_input_channels: divs(&self.decoder_input_channels)?,
            upsample_channels: divs(&self.upsample_channels)?,
            skip_plan: self
                .skip_plan
                .iter()
                .map(|s| {
                    Ok(Skip {
                        channels: div(s.channels)?,
                        ..*s
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            ..self.clone()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    pub fn with_resolution(mut self, width: usize, height: usize) -> Self {
        self.input_resolution = (width, height);
        self
    }

    pub fn encoder_name(block: usize) -> String {
        format!("conv{}", block + 1)
    }

    pub fn decoder_name(position: usize) -> String {
        format!("dec{}", DECODER_BLOCKS - position)
    }

    /// Input width of each encoder block.
    pub fn encoder_input_channels(&self) -> Vec<usize> {
        std::iter::once(self.n_input_frames)
            .chain(self.conv_block_channels[..ENCODER_BLOCKS - 1].iter().copied())
            .collect()
    }

    pub fn skip_into(&self, decoder: usize) -> Option<&Skip> {
        self.skip_plan.iter().find(|s| s.decoder == decoder)
    }

    pub fn validate(&self) -> Result<()> {
        check_resolution(self.input_resolution.0, self.input_resolution.1)?;
        if self.n_input_frames == 0 {
            return Err(Error::Construction("n_input_frames must be positive".into()));
        }
        let lens = [
            ("conv_block_channels", self.conv_block_channels.len(), ENCODER_BLOCKS),
            ("decoder_conv_channels", self.decoder_conv_channels.len(), DECODER_BLOCKS),
            ("decoder_input_channels", self.decoder_input_channels.len(), DECODER_BLOCKS),
            ("upsample_channels", self.upsample_channels.len(), DECODER_BLOCKS),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(Error::Construction(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
        }
        let widths = self
            .conv_block_channels
            .iter()
            .chain(&self.decoder_conv_channels)
            .chain(&self.decoder_input_channels)
            .chain(&self.upsample_channels)
            .chain(std::iter::once(&self.bottleneck_channels));
        if widths.into_iter().any(|&c| c == 0) {
            return Err(Error::Construction("channel counts must be positive".into()));
        }
        if !(self.leaky_relu_slope.is_finite() && self.leaky_relu_slope >= 0.0) {
            return Err(Error::Construction("leaky_relu_slope must be finite and >= 0".into()));
        }
        for skip in &self.skip_plan {
            if skip.encoder >= ENCODER_BLOCKS || skip.decoder >= DECODER_BLOCKS {
                return Err(Error::Construction(format!("skip {skip:?} is out of range")));
            }
            // Resolutions only line up between ConvK (pre-pool) and the decoder
            // fed by the K-th upsampling from the bottom.
            if skip.encoder + skip.decoder != ENCODER_BLOCKS - 1 {
                return Err(Error::Construction(format!(
                    "skip {} -> {} joins mismatched resolutions",
                    Self::encoder_name(skip.encoder),
                    Self::decoder_name(skip.decoder)
                )));
            }
            let produced = self.conv_block_channels[skip.encoder];
            if produced != skip.channels {
                return Err(Error::Construction(format!(
                    "skip {} -> {} declares {} channels but {} outputs {}",
                    Self::encoder_name(skip.encoder),
                    Self::decoder_name(skip.decoder),
                    skip.channels,
                    Self::encoder_name(skip.encoder),
                    produced
                )));
            }
        }
        for d in 0..DECODER_BLOCKS {
            if self.skip_plan.iter().filter(|s| s.decoder == d).count() > 1 {
                return Err(Error::Construction(format!(
                    "{} has more than one side channel",
                    Self::decoder_name(d)
                )));
            }
            let upsampled = self.upsample_channels[d];
            let skip = self.skip_into(d).map_or(0, |s| s.channels);
            let declared = self.decoder_input_channels[d];
            if upsampled + skip != declared {
                let source = if d == 0 {
                    "bottleneck".to_string()
                } else {
                    Self::decoder_name(d - 1)
                };
                return Err(Error::Construction(format!(
                    "{source} -> {}: upsampled {upsampled} + skip {skip} = {} but {} declares input {declared}",
                    Self::decoder_name(d),
                    upsampled + skip,
                    Self::decoder_name(d)
                )));
            }
        }
        Ok(())
    }
}

pub fn check_resolution(width: usize, height: usize) -> Result<()> {
    if width == 0
        || height == 0
        || width % RESOLUTION_MULTIPLE != 0
        || height % RESOLUTION_MULTIPLE != 0
    {
        return Err(Error::Input(format!(
            "resolution {width}x{height} is not a positive multiple of {RESOLUTION_MULTIPLE}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_size_is_consistent() {
        NetworkSpec::full_size().validate().unwrap();
    }

    #[test]
    fn broken_boundary_is_named() {
        let mut spec = NetworkSpec::full_size();
        spec.upsample_channels[1] = 512;
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("dec5 -> dec4"), "{err}");
    }

    #[test]
    fn resolution_must_divide_by_32() {
        let spec = NetworkSpec::full_size().with_resolution(100, 64);
        assert!(matches!(spec.validate(), Err(Error::Input(_))));
        assert!(check_resolution(64, 32).is_ok());
        assert!(check_resolution(0, 32).is_err());
    }

    #[test]
    fn narrowing_keeps_arithmetic() {
        let spec = NetworkSpec::full_size().narrowed(16).unwrap();
        assert_eq!(spec.conv_block_channels, vec![8, 8, 16, 16, 32]);
        assert_eq!(spec.upsample_channels, vec![32, 48, 16, 24, 8]);
        assert!(NetworkSpec::full_size().narrowed(3).is_err());
    }
}
