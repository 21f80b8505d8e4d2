use serde::{Deserialize, Serialize};

use crate::data::{flow_quadruple, normalize_frames, Dataset};
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::metrics::{epe, fl_all, MetricsReport, ReportRow};
use crate::model::{Head, Network, Tensor, RESOLUTION_MULTIPLE};
use crate::raster::{Plane, Rect};

/// Refinement applied to every predicted flow before scoring, e.g. a
/// variational smoothing pass. Receives the two frames of the pair.
pub trait FlowPostProcess {
    fn refine(&self, first: &Plane, second: &Plane, flow: FlowField) -> Result<FlowField>;
}

/// Flow from the second to the third of four grayscale frames. Frames whose
/// size is not a multiple of the network stride are resampled to the next
/// multiple and the flow is mapped back with rescaled vectors.
pub fn predict_flow(net: &Network, frames: &[&Plane; 4]) -> Result<FlowField> {
    if net.head() != Head::Flow {
        return Err(Error::State("flow prediction needs a flow-head network".into()));
    }
    let (w, h) = (frames[0].width, frames[0].height);
    let m = RESOLUTION_MULTIPLE;
    let (nw, nh) = (w.div_ceil(m).max(1) * m, h.div_ceil(m).max(1) * m);
    let resized: Vec<Plane> = frames
        .iter()
        .map(|p| {
            if (nw, nh) == (w, h) {
                (*p).clone()
            } else {
                p.crop_resize(Rect::full(w, h), nw, nh)
            }
        })
        .collect();
    let (normalized, _) = normalize_frames(&resized)?;
    let planes: Vec<&[f32]> = normalized.iter().map(|p| &p.data[..]).collect();
    let out = net.infer(&Tensor::from_planes(&planes, nh, nw)?)?;
    let flow = FlowField::new(nw, nh, out.plane(0, 0).to_vec(), out.plane(0, 1).to_vec(), vec![true; nw * nh])?;
    Ok(if (nw, nh) == (w, h) {
        flow
    } else {
        flow.crop_resize(Rect::full(nw, nh), w, h)
    })
}

/// One flow per consecutive pair; the first and last frames are doubled to
/// complete the boundary quadruples.
pub fn flow_for_sequence(net: &Network, frames: &[Plane]) -> Result<Vec<FlowField>> {
    if frames.len() < 2 {
        return Err(Error::Input(format!(
            "flow needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    (0..frames.len() - 1)
        .map(|t| {
            let q = flow_quadruple(t, frames.len()).map(|i| &frames[i]);
            predict_flow(net, &q)
        })
        .collect()
}

/// Sequences with ground-truth flow of one corpus.
#[derive(Debug, Clone)]
pub struct FlowEvalSet {
    pub name: String,
    pub data: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSampleScore {
    pub corpus: String,
    pub sequence: usize,
    pub pair: usize,
    pub epe: f64,
    pub fl_all: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEvaluation {
    pub report: MetricsReport,
    pub samples: Vec<FlowSampleScore>,
}

/// Mean EPE and Fl-all over every pair with ground truth.
pub fn eval_flow(net: &Network, sets: &[FlowEvalSet]) -> Result<FlowEvaluation> {
    eval_flow_with(net, sets, None)
}

pub fn eval_flow_with(
    net: &Network,
    sets: &[FlowEvalSet],
    post: Option<&dyn FlowPostProcess>,
) -> Result<FlowEvaluation> {
    if net.head() != Head::Flow {
        return Err(Error::State("flow evaluation needs a flow-head network".into()));
    }
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for set in sets {
        let specs = set.data.flow_specs();
        if specs.is_empty() {
            log::warn!("corpus {} has no ground-truth flow; skipped", set.name);
            continue;
        }
        let start = samples.len();
        for spec in specs {
            let seq = &set.data.sequences[spec.sequence];
            let q = spec.input_frames(seq.len()).map(|i| &seq.gray[i]);
            let mut flow = predict_flow(net, &q)?;
            if let Some(p) = post {
                flow = p.refine(q[1], q[2], flow)?;
            }
            let gt = seq.flow(spec.center).expect("flow spec has ground truth");
            if gt.valid_count() == 0 {
                log::warn!("{} pair {}: no valid ground truth; skipped", seq.name, spec.center);
                continue;
            }
            samples.push(FlowSampleScore {
                corpus: set.name.clone(),
                sequence: spec.sequence,
                pair: spec.center,
                epe: epe(&flow, gt)?,
                fl_all: fl_all(&flow, gt)?,
            });
        }
        let mine = &samples[start..];
        if mine.is_empty() {
            continue;
        }
        let n = mine.len() as f64;
        rows.push(ReportRow {
            corpus: set.name.clone(),
            n_samples: mine.len(),
            epe: Some(mine.iter().map(|s| s.epe).sum::<f64>() / n),
            fl_all: Some(mine.iter().map(|s| s.fl_all).sum::<f64>() / n),
            ..Default::default()
        });
    }
    if rows.is_empty() {
        return Err(Error::Input("no evaluation corpus carries ground-truth flow".into()));
    }
    Ok(FlowEvaluation {
        report: MetricsReport::new("flow evaluation", rows),
        samples,
    })
}
