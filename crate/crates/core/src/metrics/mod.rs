//! Losses and evaluation metrics.
//!
//! Everything is computed in `f64` from `f32` inputs. Loss functions that
//! drive training also return their gradient with respect to the prediction.

mod report;
mod ssim;

pub use report::{MetricsReport, ReportRow};
pub use ssim::{ssim, ssim_with_grad, SsimConfig};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::raster::Plane;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Fl-all outlier thresholds: absolute (px) and relative to the GT magnitude.
pub const FL_ABS_THRESHOLD: f64 = 3.0;
pub const FL_REL_THRESHOLD: f64 = 0.05;

fn check_same(a: &Plane, b: &Plane) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "images differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn l1(pred: &Plane, target: &Plane) -> Result<f64> {
    check_same(pred, target)?;
    let n = pred.data.len() as f64;
    Ok(pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(&p, &t)| (p as f64 - t as f64).abs())
        .sum::<f64>()
        / n)
}

/// `0.5·(1 − SSIM) + 0.5·mean|pred − target|` and its gradient with respect to `pred`.
pub fn interpolation_loss_with_grad(pred: &Plane, target: &Plane, cfg: &SsimConfig) -> Result<(f64, Vec<f64>)> {
    check_same(pred, target)?;
    let (s, ds) = ssim_with_grad(pred, target, cfg)?;
    let n = pred.data.len() as f64;
    let mut l1_sum = 0.0;
    let grad = pred
        .data
        .iter()
        .zip(&target.data)
        .zip(ds)
        .map(|((&p, &t), d)| {
            let diff = p as f64 - t as f64;
            l1_sum += diff.abs();
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            -0.5 * d + 0.5 * sign / n
        })
        .collect();
    Ok((0.5 * (1.0 - s) + 0.5 * l1_sum / n, grad))
}

pub fn interpolation_loss(pred: &Plane, target: &Plane, cfg: &SsimConfig) -> Result<f64> {
    Ok(0.5 * (1.0 - ssim(pred, target, cfg)?) + 0.5 * l1(pred, target)?)
}

pub fn mse(pred: &Plane, target: &Plane) -> Result<f64> {
    check_same(pred, target)?;
    let n = pred.data.len() as f64;
    Ok(pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
        .sum::<f64>()
        / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr {
    pub db: f64,
    /// Zero error: `db` holds [`PSNR_CAP_DB`].
    pub capped: bool,
}

pub fn psnr(pred: &Plane, target: &Plane, max_value: f64) -> Result<Psnr> {
    Ok(psnr_from_mse(mse(pred, target)?, max_value))
}

/// PSNR of two equally long `f64` signals, for callers holding values outside `f32` precision.
pub fn psnr_f64(pred: &[f64], target: &[f64], max_value: f64) -> Result<Psnr> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "PSNR inputs must be equally long and nonempty, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let err = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64;
    Ok(psnr_from_mse(err, max_value))
}

fn psnr_from_mse(err: f64, max_value: f64) -> Psnr {
    let db = 10.0 * (max_value * max_value / err).log10();
    if err == 0.0 || db >= PSNR_CAP_DB {
        return Psnr {
            db: PSNR_CAP_DB,
            capped: true,
        };
    }
    Psnr { db, capped: false }
}

fn check_flow(flow: &FlowField, gt: &FlowField) -> Result<usize> {
    if !flow.same_shape(gt) {
        return Err(Error::Shape(format!(
            "flow {}x{} vs ground truth {}x{}",
            flow.width, flow.height, gt.width, gt.height
        )));
    }
    match gt.valid_count() {
        0 => Err(Error::Input("ground truth has no valid pixels".into())),
        n => Ok(n),
    }
}

#[inline]
fn endpoint(flow: &FlowField, gt: &FlowField, i: usize) -> (f64, f64, f64) {
    let du = flow.u[i] as f64 - gt.u[i] as f64;
    let dv = flow.v[i] as f64 - gt.v[i] as f64;
    (du, dv, (du * du + dv * dv).sqrt())
}

/// Mean endpoint error over the ground truth's valid pixels.
pub fn epe(flow: &FlowField, gt: &FlowField) -> Result<f64> {
    let n = check_flow(flow, gt)?;
    let sum: f64 = (0..gt.len()).filter(|&i| gt.valid[i]).map(|i| endpoint(flow, gt, i).2).sum();
    Ok(sum / n as f64)
}

/// EPE and its gradient with respect to (u, v) of `flow`; zero at invalid pixels
/// and where the error vanishes.
pub fn epe_with_grad(flow: &FlowField, gt: &FlowField) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = check_flow(flow, gt)? as f64;
    let mut gu = vec![0.0; gt.len()];
    let mut gv = vec![0.0; gt.len()];
    let mut sum = 0.0;
    for i in (0..gt.len()).filter(|&i| gt.valid[i]) {
        let (du, dv, r) = endpoint(flow, gt, i);
        sum += r;
        if r > 0.0 {
            gu[i] = du / (r * n);
            gv[i] = dv / (r * n);
        }
    }
    Ok((sum / n, gu, gv))
}

/// Percentage of valid pixels with EPE > 3 px and > 5 % of the GT magnitude.
pub fn fl_all(flow: &FlowField, gt: &FlowField) -> Result<f64> {
    let n = check_flow(flow, gt)?;
    let outliers = (0..gt.len())
        .filter(|&i| gt.valid[i])
        .filter(|&i| {
            let e = endpoint(flow, gt, i).2;
            let mag = (gt.u[i] as f64).hypot(gt.v[i] as f64);
            e > FL_ABS_THRESHOLD && e > FL_REL_THRESHOLD * mag
        })
        .count();
    Ok(100.0 * outliers as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: usize, h: usize, f: impl Fn(usize) -> f32) -> Plane {
        Plane::new(w, h, (0..w * h).map(f).collect()).unwrap()
    }

    #[test]
    fn ssim_identity_is_one() {
        let a = plane(16, 16, |i| ((i * 37) % 11) as f32 / 11.0);
        assert_eq!(ssim(&a, &a, &SsimConfig::default()).unwrap(), 1.0);
        let c = Plane::filled(16, 16, 0.4);
        assert_eq!(ssim(&c, &c, &SsimConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn ssim_rejects_bad_config_and_shapes() {
        let a = Plane::filled(16, 16, 0.0);
        let b = Plane::filled(16, 12, 0.0);
        assert!(ssim(&a, &b, &SsimConfig::default()).is_err());
        let even = SsimConfig {
            window_size: 4,
            ..Default::default()
        };
        assert!(ssim(&a, &a, &even).is_err());
        let tiny = Plane::filled(8, 8, 0.0);
        assert!(ssim(&tiny, &tiny, &SsimConfig::default()).is_err());
    }

    #[test]
    fn psnr_closed_form() {
        let p = psnr_f64(&[0.0; 64], &[0.1; 64], 1.0).unwrap();
        assert!((p.db - 20.0).abs() < 1e-9, "{}", p.db);
        assert!(!p.capped);
        let a = Plane::filled(8, 8, 0.5);
        let b = Plane::filled(8, 8, 0.75);
        let q = psnr(&a, &b, 1.0).unwrap();
        assert!((q.db - 20.0 * 4f64.log10()).abs() < 1e-9, "{}", q.db);
        let same = psnr(&a, &a, 1.0).unwrap();
        assert!(same.capped && same.db == PSNR_CAP_DB);
    }

    #[test]
    fn epe_three_four_five() {
        let gt = FlowField::constant(4, 4, 0.0, 0.0);
        let f = FlowField::constant(4, 4, 3.0, 4.0);
        assert_eq!(epe(&f, &gt).unwrap(), 5.0);
        assert_eq!(epe(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn fl_all_rules() {
        let gt = FlowField::constant(4, 4, 100.0, 0.0);
        assert_eq!(fl_all(&FlowField::constant(4, 4, 104.0, 0.0), &gt).unwrap(), 0.0);
        let zero = FlowField::constant(4, 4, 0.0, 0.0);
        assert_eq!(fl_all(&FlowField::constant(4, 4, 4.0, 0.0), &zero).unwrap(), 100.0);
        assert_eq!(fl_all(&zero, &zero).unwrap(), 0.0);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mut gt = FlowField::constant(2, 2, 0.0, 0.0);
        gt.valid.fill(false);
        assert!(epe(&gt.clone(), &gt).is_err());
        assert!(fl_all(&gt.clone(), &gt).is_err());
    }

    #[test]
    fn loss_is_zero_at_target() {
        let a = plane(16, 16, |i| ((i * 13) % 7) as f32);
        let cfg = SsimConfig::default().with_range(6.0);
        assert_eq!(interpolation_loss(&a, &a, &cfg).unwrap(), 0.0);
        let (l, g) = interpolation_loss_with_grad(&a, &a, &cfg).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }
}
