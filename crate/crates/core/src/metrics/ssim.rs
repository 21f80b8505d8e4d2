use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Plane;

/// Windowed SSIM parameters. `C1 = (k1·L)²`, `C2 = (k2·L)²` for dynamic range `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window_size: usize,
    pub gaussian_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window_size: 11,
            gaussian_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn with_range(self, dynamic_range: f64) -> Self {
        SsimConfig { dynamic_range, ..self }
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return Err(Error::Input(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.window_size
            )));
        }
        if !(self.gaussian_sigma > 0.0) || !(self.c1() > 0.0) || !(self.c2() > 0.0) {
            return Err(Error::Input("SSIM sigma and stability constants must be positive".into()));
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let r = (self.window_size / 2) as f64;
        let raw: Vec<f64> = (0..self.window_size)
            .map(|i| {
                let d = i as f64 - r;
                (-d * d / (2.0 * self.gaussian_sigma * self.gaussian_sigma)).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }
}

struct Filter {
    taps: Vec<f64>,
    w: usize,
    h: usize,
    ow: usize,
    oh: usize,
}

impl Filter {
    fn new(cfg: &SsimConfig, w: usize, h: usize) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.window_size;
        if w < k || h < k {
            return Err(Error::Shape(format!(
                "image {w}x{h} is smaller than the {k}x{k} SSIM window"
            )));
        }
        Ok(Filter {
            taps: cfg.taps(),
            w,
            h,
            ow: w - k + 1,
            oh: h - k + 1,
        })
    }

    /// Correlate with the separable window, "valid" positions only.
    fn valid(&self, img: &[f64]) -> Vec<f64> {
        let k = self.taps.len();
        let mut tmp = vec![0.0; self.ow * self.h];
        for y in 0..self.h {
            let row = &img[y * self.w..(y + 1) * self.w];
            for x in 0..self.ow {
                tmp[y * self.ow + x] = (0..k).map(|i| self.taps[i] * row[x + i]).sum();
            }
        }
        let mut out = vec![0.0; self.ow * self.oh];
        for y in 0..self.oh {
            for x in 0..self.ow {
                out[y * self.ow + x] = (0..k).map(|i| self.taps[i] * tmp[(y + i) * self.ow + x]).sum();
            }
        }
        out
    }

    /// Adjoint of [`Filter::valid`]: spread a position map back over the full image.
    fn adjoint(&self, map: &[f64]) -> Vec<f64> {
        let k = self.taps.len();
        let mut tmp = vec![0.0; self.ow * self.h];
        for y in 0..self.oh {
            for x in 0..self.ow {
                let m = map[y * self.ow + x];
                for i in 0..k {
                    tmp[(y + i) * self.ow + x] += self.taps[i] * m;
                }
            }
        }
        let mut out = vec![0.0; self.w * self.h];
        for y in 0..self.h {
            for x in 0..self.ow {
                let t = tmp[y * self.ow + x];
                for i in 0..k {
                    out[y * self.w + x + i] += self.taps[i] * t;
                }
            }
        }
        out
    }
}

fn to_f64(p: &Plane) -> Vec<f64> {
    p.data.iter().map(|&v| v as f64).collect()
}

/// Mean local SSIM over all valid window positions.
pub fn ssim(a: &Plane, b: &Plane, cfg: &SsimConfig) -> Result<f64> {
    Ok(ssim_impl(a, b, cfg, false)?.0)
}

/// SSIM and its gradient with respect to every pixel of `a`.
pub fn ssim_with_grad(a: &Plane, b: &Plane, cfg: &SsimConfig) -> Result<(f64, Vec<f64>)> {
    let (s, g) = ssim_impl(a, b, cfg, true)?;
    Ok((s, g.expect("gradient requested")))
}

fn ssim_impl(a: &Plane, b: &Plane, cfg: &SsimConfig, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "SSIM inputs differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let f = Filter::new(cfg, a.width, a.height)?;
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let av = to_f64(a);
    let bv = to_f64(b);
    let sq = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = f.valid(&av);
    let mu_b = f.valid(&bv);
    let e_aa = f.valid(&sq(&av, &av));
    let e_bb = f.valid(&sq(&bv, &bv));
    let e_ab = f.valid(&sq(&av, &bv));
    let n = mu_a.len();
    let mut total = 0.0;
    let (mut alpha, mut beta, mut gamma) = if want_grad {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let a1 = 2.0 * ma * mb + c1;
        let a2 = 2.0 * cov + c2;
        let b1 = ma * ma + mb * mb + c1;
        let b2 = var_a + var_b + c2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        if want_grad {
            let ds_dmu = 2.0 * mb * a2 / (b1 * b2) - s * 2.0 * ma / b1;
            let ds_dvar = -s / b2;
            let ds_dcov = 2.0 * a1 / (b1 * b2);
            // var_a = E[a²] - μa², cov = E[ab] - μa·μb
            alpha[i] = ds_dmu - 2.0 * ma * ds_dvar - mb * ds_dcov;
            beta[i] = ds_dvar;
            gamma[i] = ds_dcov;
        }
    }
    let mean = total / n as f64;
    if !want_grad {
        return Ok((mean, None));
    }
    let (ga, gb, gc) = (f.adjoint(&alpha), f.adjoint(&beta), f.adjoint(&gamma));
    let inv_n = 1.0 / n as f64;
    let grad = (0..av.len())
        .map(|p| inv_n * (ga[p] + 2.0 * av[p] * gb[p] + bv[p] * gc[p]))
        .collect();
    Ok((mean, Some(grad)))
}
