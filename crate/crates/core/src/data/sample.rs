use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::model::Tensor;
use crate::raster::Plane;

use super::augment::AugmentPlan;
use super::index::SampleSpec;
use super::normalize::{joint_stats, NormStats};

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Center frame, in the same units as the inputs.
    Frame(Plane),
    /// Displacement from the second to the third input frame, in pixels.
    Flow(FlowField),
}

/// Frames and target as read from the corpus, before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub spec: SampleSpec,
    pub inputs: Vec<Plane>,
    pub target: Target,
}

/// A network-ready sample: normalized inputs, a target in network units, and
/// the bookkeeping needed to map predictions back.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub spec: SampleSpec,
    pub inputs: Vec<Plane>,
    pub target: Target,
    pub stats: NormStats,
    pub augmentation: Option<AugmentPlan>,
}

impl TrainingSample {
    /// Normalize inputs with their joint statistics; a frame target shares them,
    /// a flow target is left in pixels.
    pub fn from_raw(raw: RawSample, augmentation: Option<AugmentPlan>) -> Result<Self> {
        let first = raw
            .inputs
            .first()
            .ok_or_else(|| Error::Input("sample has no input frames".into()))?;
        if raw.inputs.iter().any(|p| !p.same_shape(first)) {
            return Err(Error::Shape("input frames of a sample differ in size".into()));
        }
        let stats = joint_stats(&raw.inputs);
        let inputs = raw.inputs.iter().map(|p| p.map(|v| stats.normalize(v))).collect();
        let target = match raw.target {
            Target::Frame(p) => Target::Frame(p.map(|v| stats.normalize(v))),
            Target::Flow(f) => Target::Flow(f),
        };
        Ok(TrainingSample {
            spec: raw.spec,
            inputs,
            target,
            stats,
            augmentation,
        })
    }

    pub fn width(&self) -> usize {
        self.inputs[0].width
    }

    pub fn height(&self) -> usize {
        self.inputs[0].height
    }
}

/// Stack the inputs of equally sized samples into an `[n, frames, h, w]` tensor.
pub fn stack_inputs(samples: &[&TrainingSample]) -> Result<Tensor> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Input("cannot stack an empty batch".into()))?;
    let (c, h, w) = (first.inputs.len(), first.height(), first.width());
    let mut data = Vec::with_capacity(samples.len() * c * h * w);
    for s in samples {
        if s.inputs.len() != c || s.height() != h || s.width() != w {
            return Err(Error::Shape(format!(
                "batch mixes sample shapes: {c}x{h}x{w} vs {}x{}x{}",
                s.inputs.len(),
                s.height(),
                s.width()
            )));
        }
        for p in &s.inputs {
            data.extend_from_slice(&p.data);
        }
    }
    Tensor::from_vec([samples.len(), c, h, w], data)
}
