use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Plane;

/// Floor on the joint standard deviation, in intensity units.
pub const STD_EPSILON: f32 = 1e-6;

/// Joint statistics of the frames of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f32,
    pub std: f32,
    /// The measured std fell below [`STD_EPSILON`] and was replaced by it.
    pub degenerate: bool,
}

impl NormStats {
    #[inline]
    pub fn normalize(&self, v: f32) -> f32 {
        (v - self.mean) / self.std
    }

    #[inline]
    pub fn denormalize(&self, v: f32) -> f32 {
        v * self.std + self.mean
    }
}

/// Subtract the joint mean of all frames and divide by their joint std.
pub fn normalize_frames(frames: &[Plane]) -> Result<(Vec<Plane>, NormStats)> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Input("cannot normalize an empty frame set".into()))?;
    if frames.iter().any(|f| !f.same_shape(first)) || first.data.is_empty() {
        return Err(Error::Shape("frames to normalize must share a nonempty shape".into()));
    }
    let stats = joint_stats(frames);
    let out = frames.iter().map(|f| f.map(|v| stats.normalize(v))).collect();
    Ok((out, stats))
}

pub fn joint_stats(frames: &[Plane]) -> NormStats {
    let count = frames.iter().map(|f| f.data.len()).sum::<usize>() as f64;
    let values = || frames.iter().flat_map(|f| f.data.iter().map(|&v| v as f64));
    let mean = values().sum::<f64>() / count;
    let var = values().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    let std = var.sqrt() as f32;
    let degenerate = !(std >= STD_EPSILON);
    NormStats {
        mean: mean as f32,
        std: if degenerate { STD_EPSILON } else { std },
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(seed: u32) -> Vec<Plane> {
        (0..4)
            .map(|k| {
                let data = (0..48)
                    .map(|i| (((i * 7 + k * 13 + seed as usize) % 17) as f32) / 17.0)
                    .collect();
                Plane::new(8, 6, data).unwrap()
            })
            .collect()
    }

    fn moments(frames: &[Plane]) -> (f64, f64) {
        let all: Vec<f64> = frames.iter().flat_map(|f| f.data.iter().map(|&v| v as f64)).collect();
        let m = all.iter().sum::<f64>() / all.len() as f64;
        let v = all.iter().map(|x| (x - m).powi(2)).sum::<f64>() / all.len() as f64;
        (m, v.sqrt())
    }

    #[test]
    fn output_has_zero_mean_unit_std() {
        let (out, stats) = normalize_frames(&frames(3)).unwrap();
        let (m, s) = moments(&out);
        assert!(m.abs() < 1e-4 && (s - 1.0).abs() < 1e-4);
        assert!(!stats.degenerate);
    }

    #[test]
    fn affine_invariance() {
        let x = frames(1);
        let y: Vec<Plane> = x.iter().map(|f| f.map(|v| 3.5 * v - 2.0)).collect();
        let (nx, _) = normalize_frames(&x).unwrap();
        let (ny, _) = normalize_frames(&y).unwrap();
        for (a, b) in nx.iter().zip(&ny) {
            for (p, q) in a.data.iter().zip(&b.data) {
                assert!((p - q).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn constant_frames_are_flagged() {
        let x = vec![Plane::filled(4, 4, 0.3); 4];
        let (out, stats) = normalize_frames(&x).unwrap();
        assert!(stats.degenerate);
        assert_eq!(stats.std, STD_EPSILON);
        assert!(out.iter().all(|p| p.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn idempotent() {
        let (once, _) = normalize_frames(&frames(5)).unwrap();
        let (twice, _) = normalize_frames(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            for (p, q) in a.data.iter().zip(&b.data) {
                assert!((p - q).abs() < 1e-6);
            }
        }
    }
}
