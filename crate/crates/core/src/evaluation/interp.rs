use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SampleKind, SampleSpec};
use crate::error::{Error, Result};
use crate::metrics::{psnr_f64, ssim, MetricsReport, ReportRow, SsimConfig};
use crate::model::{interpolate_color, Network, RESOLUTION_MULTIPLE};
use crate::raster::{ColorFrame, Plane, Rect};

/// Held-out interpolation samples of one corpus.
#[derive(Debug, Clone)]
pub struct InterpEvalSet {
    pub name: String,
    pub data: Dataset,
    pub specs: Vec<SampleSpec>,
}

impl InterpEvalSet {
    /// Every spacing-1 target of every sequence.
    pub fn adjacent(name: impl Into<String>, data: Dataset) -> Self {
        let specs = data.interpolation_specs().into_iter().filter(|s| s.spacing == 1).collect();
        InterpEvalSet {
            name: name.into(),
            data,
            specs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpSampleScore {
    pub corpus: String,
    pub sequence: usize,
    pub center: usize,
    pub spacing: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub blend_psnr: f64,
    pub blend_ssim: f64,
}

/// Network and linear-blend scores per corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationReport {
    pub network: MetricsReport,
    pub linear_blend: MetricsReport,
    pub samples: Vec<InterpSampleScore>,
}

impl InterpolationReport {
    /// Methods as rows, corpora as columns, cells `PSNR (SSIM)`.
    pub fn to_table(&self) -> String {
        let cols: Vec<&str> = self.network.rows.iter().map(|r| r.corpus.as_str()).collect();
        let mut out = String::from("Interpolation performance in PSNR (SSIM)\n");
        let _ = write!(out, "{:<16}", "method");
        for c in &cols {
            let _ = write!(out, " {c:>18}");
        }
        out.push('\n');
        for (name, rep) in [("linear blend", &self.linear_blend), ("network", &self.network)] {
            let _ = write!(out, "{name:<16}");
            for c in &cols {
                let cell = rep.row(c).map_or("-".to_string(), |r| {
                    format!("{:.2} ({:.4})", r.psnr.unwrap_or(f64::NAN), r.ssim.unwrap_or(f64::NAN))
                });
                let _ = write!(out, " {cell:>18}");
            }
            out.push('\n');
        }
        out
    }
}

/// Largest centered crop whose sides are multiples of the network stride.
pub(crate) fn network_crop(width: usize, height: usize) -> Result<Rect> {
    let m = RESOLUTION_MULTIPLE;
    let (w, h) = (width / m * m, height / m * m);
    if w == 0 || h == 0 {
        return Err(Error::Input(format!(
            "frames of {width}x{height} are smaller than the {m}-pixel network stride"
        )));
    }
    Ok(Rect {
        x: ((width - w) / 2) as f32,
        y: ((height - h) / 2) as f32,
        width: w as f32,
        height: h as f32,
    })
}

fn crop(frame: &ColorFrame, r: Rect) -> ColorFrame {
    let (w, h) = (r.width as usize, r.height as usize);
    ColorFrame {
        channels: frame.channels.clone().map(|p| p.crop_resize(r, w, h)),
    }
}

/// Mean of the two frames adjacent to the target.
pub fn linear_blend(a: &ColorFrame, b: &ColorFrame) -> ColorFrame {
    let mut out = a.clone();
    for (o, q) in out.channels.iter_mut().zip(&b.channels) {
        for (x, &y) in o.data.iter_mut().zip(&q.data) {
            *x = 0.5 * (*x + y);
        }
    }
    out
}

fn flat(frame: &ColorFrame) -> Vec<f64> {
    frame
        .channels
        .iter()
        .flat_map(|p| p.data.iter().map(|&v| v as f64))
        .collect()
}

/// PSNR over all channels and mean per-channel SSIM, both on [0, 1] intensities.
pub fn color_scores(pred: &ColorFrame, target: &ColorFrame) -> Result<(f64, f64)> {
    let p = psnr_f64(&flat(pred), &flat(target), 1.0)?;
    let cfg = SsimConfig::default();
    let mut s = 0.0;
    for (a, b) in pred.channels.iter().zip(&target.channels) {
        s += ssim(a, b, &cfg)?;
    }
    Ok((p.db, s / 3.0))
}

fn clamp01(frame: ColorFrame) -> ColorFrame {
    ColorFrame {
        channels: frame.channels.map(|p: Plane| p.map(|v| v.clamp(0.0, 1.0))),
    }
}

/// PSNR and SSIM of the network and of linear blending on every held-out
/// target, per corpus and overall. Frames are center-cropped to the network
/// stride; the network runs once per color channel.
pub fn eval_interpolation(net: &Network, sets: &[InterpEvalSet]) -> Result<InterpolationReport> {
    if sets.iter().all(|s| s.specs.is_empty()) {
        return Err(Error::Input("interpolation evaluation set is empty".into()));
    }
    let mut samples = Vec::new();
    let mut net_rows = Vec::new();
    let mut blend_rows = Vec::new();
    for set in sets {
        if set.specs.is_empty() {
            log::warn!("corpus {} has no evaluation samples; skipped", set.name);
            continue;
        }
        let first = set.specs.len();
        for spec in &set.specs {
            if spec.kind != SampleKind::Interpolation {
                return Err(Error::Input("interpolation evaluation needs interpolation samples".into()));
            }
            let seq = set
                .data
                .sequences
                .get(spec.sequence)
                .ok_or_else(|| Error::Data(format!("missing sequence {}", spec.sequence)))?;
            let idx = spec.input_frames(seq.len());
            if idx.iter().any(|&i| i >= seq.len()) {
                return Err(Error::Data(format!("sample at frame {} does not fit {}", spec.center, seq.name)));
            }
            let rect = network_crop(seq.frames[0].width(), seq.frames[0].height())?;
            let inputs: Vec<ColorFrame> = idx.iter().map(|&i| crop(&seq.frames[i], rect)).collect();
            let target = crop(&seq.frames[spec.center], rect);
            let pred = clamp01(interpolate_color(net, &inputs)?);
            let blend = linear_blend(&inputs[1], &inputs[2]);
            let (p, s) = color_scores(&pred, &target)?;
            let (bp, bs) = color_scores(&blend, &target)?;
            samples.push(InterpSampleScore {
                corpus: set.name.clone(),
                sequence: spec.sequence,
                center: spec.center,
                spacing: spec.spacing,
                psnr: p,
                ssim: s,
                blend_psnr: bp,
                blend_ssim: bs,
            });
        }
        let mine = &samples[samples.len() - first..];
        let n = mine.len() as f64;
        let mean = |f: fn(&InterpSampleScore) -> f64| mine.iter().map(f).sum::<f64>() / n;
        net_rows.push(ReportRow {
            corpus: set.name.clone(),
            n_samples: mine.len(),
            psnr: Some(mean(|s| s.psnr)),
            ssim: Some(mean(|s| s.ssim)),
            ..Default::default()
        });
        blend_rows.push(ReportRow {
            corpus: set.name.clone(),
            n_samples: mine.len(),
            psnr: Some(mean(|s| s.blend_psnr)),
            ssim: Some(mean(|s| s.blend_ssim)),
            ..Default::default()
        });
    }
    Ok(InterpolationReport {
        network: MetricsReport::new("network interpolation", net_rows),
        linear_blend: MetricsReport::new("linear blending", blend_rows),
        samples,
    })
}
