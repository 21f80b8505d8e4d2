//! Reference implementations written independently of the library, used as
//! oracles by the integration tests.
#![allow(dead_code)]

use interflow::metrics::SsimConfig;
use interflow::{FlowField, Plane};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_plane(r: &mut impl Rng, w: usize, h: usize) -> Plane {
    Plane::new(w, h, (0..w * h).map(|_| r.random::<f32>()).collect()).unwrap()
}

/// Random flow with roughly a quarter of the pixels invalid (at least one valid).
pub fn random_flow(r: &mut impl Rng, w: usize, h: usize, scale: f32) -> FlowField {
    let n = w * h;
    let u = (0..n).map(|_| r.random_range(-scale..scale)).collect();
    let v = (0..n).map(|_| r.random_range(-scale..scale)).collect();
    let mut valid: Vec<bool> = (0..n).map(|_| r.random::<f32>() > 0.25).collect();
    valid[0] = true;
    FlowField::new(w, h, u, v, valid).unwrap()
}

/// SSIM averaged over every window position fully inside the image, with the
/// statistics of each window summed directly from the 2-D Gaussian weights.
pub fn naive_ssim(a: &Plane, b: &Plane, cfg: &SsimConfig) -> f64 {
    let k = cfg.window_size;
    let r = (k / 2) as f64;
    let mut w2 = vec![0.0f64; k * k];
    for i in 0..k {
        for j in 0..k {
            let (di, dj) = (i as f64 - r, j as f64 - r);
            w2[i * k + j] = (-(di * di + dj * dj) / (2.0 * cfg.gaussian_sigma * cfg.gaussian_sigma)).exp();
        }
    }
    let total: f64 = w2.iter().sum();
    w2.iter_mut().for_each(|v| *v /= total);
    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let (mut sum, mut count) = (0.0, 0usize);
    for y0 in 0..=a.height - k {
        for x0 in 0..=a.width - k {
            let at = |p: &Plane, i: usize, j: usize| p.data[(y0 + i) * p.width + x0 + j] as f64;
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    ma += w2[i * k + j] * at(a, i, j);
                    mb += w2[i * k + j] * at(b, i, j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let (da, db) = (at(a, i, j) - ma, at(b, i, j) - mb);
                    va += w2[i * k + j] * da * da;
                    vb += w2[i * k + j] * db * db;
                    cov += w2[i * k + j] * da * db;
                }
            }
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

pub fn naive_epe(f: &FlowField, g: &FlowField) -> f64 {
    let (mut s, mut n) = (0.0, 0.0);
    for i in 0..g.u.len() {
        if g.valid[i] {
            let du = f.u[i] as f64 - g.u[i] as f64;
            let dv = f.v[i] as f64 - g.v[i] as f64;
            s += (du * du + dv * dv).sqrt();
            n += 1.0;
        }
    }
    s / n
}

pub fn naive_fl_all(f: &FlowField, g: &FlowField) -> f64 {
    let (mut bad, mut n) = (0.0, 0.0);
    for i in 0..g.u.len() {
        if !g.valid[i] {
            continue;
        }
        let du = f.u[i] as f64 - g.u[i] as f64;
        let dv = f.v[i] as f64 - g.v[i] as f64;
        let e = (du * du + dv * dv).sqrt();
        let m = ((g.u[i] as f64).powi(2) + (g.v[i] as f64).powi(2)).sqrt();
        if e > 3.0 && e > 0.05 * m {
            bad += 1.0;
        }
        n += 1.0;
    }
    100.0 * bad / n
}

/// Every (center, spacing) whose inputs at center ± spacing and center ± 3·spacing
/// lie inside a sequence of `len` frames, spacing 1 first.
pub fn exhaustive_samples(len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for s in [1usize, 2] {
        for t in 0..len {
            let inside = [-3isize, -1, 1, 3]
                .iter()
                .all(|o| (0..len as isize).contains(&(t as isize + o * s as isize)));
            if inside {
                out.push((t, s));
            }
        }
    }
    out
}

/// Parameter count of the hourglass network for the published block widths
/// divided by `div`: 3x3 and 4x4 convolutions carry a bias plus batch-norm
/// scale and shift, the head conv only a bias.
pub fn parameter_oracle(div: usize) -> usize {
    let d = |c: usize| c / div;
    let conv = |ci: usize, co: usize| 9 * ci * co + 3 * co;
    let up = |ci: usize, co: usize| 16 * ci * co + 3 * co;
    let enc_in = [4, d(128), d(128), d(256), d(256)];
    let enc_out = [d(128), d(128), d(256), d(256), d(512)];
    let mut total = 0;
    for (&ci, &co) in enc_in.iter().zip(&enc_out) {
        total += conv(ci, co) + 2 * conv(co, co);
    }
    total += conv(d(512), d(1024)) + conv(d(1024), d(1024)) + up(d(1024), d(512));
    let dec_in = [d(1024), d(1024), d(512), d(512), d(256)];
    let dec_conv = [d(1024), d(512), d(512), d(256), d(128)];
    let skips = [d(512), d(256), d(256), d(128), d(128)];
    for i in 0..4 {
        let next_up = dec_in[i + 1] - skips[i + 1];
        total += conv(dec_in[i], dec_conv[i]) + conv(dec_conv[i], dec_conv[i]) + up(dec_conv[i], next_up);
    }
    total + conv(dec_in[4], dec_conv[4]) + 9 * dec_conv[4] + 1
}

/// Central finite difference of `f` at coordinate `i` of `x`, using the step
/// actually representable in `f32`.
pub fn central_difference(x: &mut [f32], i: usize, h: f32, mut f: impl FnMut(&[f32]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let (hi_x, hi) = (x[i], f(x));
    x[i] = orig - h;
    let (lo_x, lo) = (x[i], f(x));
    x[i] = orig;
    (hi - lo) / (hi_x as f64 - lo_x as f64)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
