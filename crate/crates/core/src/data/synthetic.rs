//! Moving textured layers composited back to front, with exact flow and
//! occlusion masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::raster::{ColorFrame, Plane};

/// Generator parameters. Speeds are in px/frame, acceleration in px/frame².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub width: usize,
    pub height: usize,
    pub length: usize,
    pub sequences: usize,
    /// Layer 0 is a full-frame background; the rest are sprites.
    pub layers: usize,
    pub min_speed: f32,
    pub max_speed: f32,
    /// Every layer moves with this velocity instead of a random one.
    pub fixed_velocity: Option<[f32; 2]>,
    pub max_acceleration: f32,
    /// Lattice cell size of the value-noise texture, in pixels.
    pub texture_scale: f32,
    pub min_sprite_size: f32,
    pub max_sprite_size: f32,
    /// Tint layers with random colors; otherwise frames are gray.
    pub color: bool,
    /// Standard deviation of additive Gaussian sensor noise, drawn
    /// independently per frame and pixel. Flow is unaffected.
    pub noise: f32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            width: 64,
            height: 32,
            length: 24,
            sequences: 8,
            layers: 3,
            min_speed: 0.0,
            max_speed: 4.0,
            fixed_velocity: None,
            max_acceleration: 0.0,
            texture_scale: 4.0,
            min_sprite_size: 8.0,
            max_sprite_size: 20.0,
            color: false,
            noise: 0.0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width < 2 || self.height < 2 {
            return bad(format!("synthetic frames must be at least 2x2, got {}x{}", self.width, self.height));
        }
        if !(self.min_speed >= 0.0 && self.min_speed <= self.max_speed) {
            return bad(format!(
                "speed range [{}, {}] is not a valid interval",
                self.min_speed, self.max_speed
            ));
        }
        if !(self.texture_scale > 0.0) || !(self.max_acceleration >= 0.0) {
            return bad("texture_scale must be positive and max_acceleration nonnegative".into());
        }
        if !(self.min_sprite_size > 0.0 && self.min_sprite_size <= self.max_sprite_size) {
            return bad("sprite size range must be a positive interval".into());
        }
        if !(self.noise >= 0.0) {
            return bad(format!("noise must be nonnegative, got {}", self.noise));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Background,
    Rect { half_w: f32, half_h: f32 },
    Ellipse { half_w: f32, half_h: f32 },
}

/// One rigidly translating textured layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub shape: Shape,
    /// Position of the layer origin at frame 0.
    pub origin: [f32; 2],
    pub velocity: [f32; 2],
    pub acceleration: [f32; 2],
    pub texture_seed: u64,
    pub texture_scale: f32,
    pub brightness: f32,
    pub contrast: f32,
    pub tint: [f32; 3],
}

impl Layer {
    pub fn position(&self, t: f32) -> [f32; 2] {
        let p = |i: usize| self.origin[i] + self.velocity[i] * t + 0.5 * self.acceleration[i] * t * t;
        [p(0), p(1)]
    }

    fn covers(&self, lx: f32, ly: f32) -> bool {
        match self.shape {
            Shape::Background => true,
            Shape::Rect { half_w, half_h } => lx.abs() <= half_w && ly.abs() <= half_h,
            Shape::Ellipse { half_w, half_h } => (lx / half_w).powi(2) + (ly / half_h).powi(2) <= 1.0,
        }
    }

    fn intensity(&self, lx: f32, ly: f32) -> f32 {
        let s = self.texture_scale;
        let n = 0.65 * value_noise(lx / s, ly / s, self.texture_seed)
            + 0.35 * value_noise(2.0 * lx / s, 2.0 * ly / s, self.texture_seed ^ 0x9e37_79b9);
        (self.brightness + self.contrast * (n - 0.5)).clamp(0.0, 1.0)
    }
}

fn hash(ix: i64, iy: i64, seed: u64) -> f32 {
    let mut z = seed
        .wrapping_add((ix as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((iy as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 40) as f32 / (1u64 << 24) as f32
}

/// Smooth value noise in [0, 1), defined on the whole plane.
fn value_noise(x: f32, y: f32, seed: u64) -> f32 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let a = hash(ix, iy, seed) * (1.0 - tx) + hash(ix + 1, iy, seed) * tx;
    let b = hash(ix, iy + 1, seed) * (1.0 - tx) + hash(ix + 1, iy + 1, seed) * tx;
    a * (1.0 - ty) + b * ty
}

/// A set of layers, topmost last, rendered at integer pixel centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    pub layers: Vec<Layer>,
}

impl SyntheticScene {
    pub fn random(cfg: &SyntheticConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.layers).map(|i| random_layer(cfg, i == 0, rng)).collect();
        Ok(SyntheticScene {
            width: cfg.width,
            height: cfg.height,
            layers,
        })
    }

    /// Index of the topmost layer covering `(x, y)` at time `t`.
    pub fn top_layer(&self, x: f32, y: f32, t: f32) -> Option<usize> {
        self.layers.iter().rposition(|l| {
            let [px, py] = l.position(t);
            l.covers(x - px, y - py)
        })
    }

    pub fn render(&self, t: usize) -> ColorFrame {
        let n = self.width * self.height;
        let mut ch = [vec![0.5f32; n], vec![0.5f32; n], vec![0.5f32; n]];
        let t = t as f32;
        for y in 0..self.height {
            for x in 0..self.width {
                let (xf, yf) = (x as f32, y as f32);
                if let Some(k) = self.top_layer(xf, yf, t) {
                    let l = &self.layers[k];
                    let [px, py] = l.position(t);
                    let v = l.intensity(xf - px, yf - py);
                    for c in 0..3 {
                        ch[c][y * self.width + x] = (v * l.tint[c]).clamp(0.0, 1.0);
                    }
                }
            }
        }
        let [r, g, b] = ch;
        let plane = |data| Plane {
            width: self.width,
            height: self.height,
            data,
        };
        ColorFrame {
            channels: [plane(r), plane(g), plane(b)],
        }
    }

    /// Exact flow from frame `t` to `t + 1`. A pixel is invalid when its point
    /// is hidden by another layer at `t + 1` or leaves the image.
    pub fn flow(&self, t: usize) -> FlowField {
        let mut f = FlowField::constant(self.width, self.height, 0.0, 0.0);
        let (t0, t1) = (t as f32, t as f32 + 1.0);
        let (maxx, maxy) = ((self.width - 1) as f32, (self.height - 1) as f32);
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                let (xf, yf) = (x as f32, y as f32);
                let Some(k) = self.top_layer(xf, yf, t0) else { continue };
                let (a, b) = (self.layers[k].position(t0), self.layers[k].position(t1));
                let (u, v) = (b[0] - a[0], b[1] - a[1]);
                f.u[i] = u;
                f.v[i] = v;
                let (tx, ty) = (xf + u, yf + v);
                let inside = tx >= 0.0 && ty >= 0.0 && tx <= maxx && ty <= maxy;
                f.valid[i] = inside && self.top_layer(tx, ty, t1) == Some(k);
            }
        }
        f
    }
}

fn random_layer(cfg: &SyntheticConfig, background: bool, rng: &mut impl Rng) -> Layer {
    let velocity = cfg.fixed_velocity.unwrap_or_else(|| {
        let speed = if cfg.max_speed > cfg.min_speed {
            rng.random_range(cfg.min_speed..=cfg.max_speed)
        } else {
            cfg.min_speed
        };
        let angle = rng.random_range(0.0..std::f32::consts::TAU);
        [speed * angle.cos(), speed * angle.sin()]
    });
    let acceleration = if cfg.max_acceleration > 0.0 {
        let a = rng.random_range(0.0..=cfg.max_acceleration);
        let angle = rng.random_range(0.0..std::f32::consts::TAU);
        [a * angle.cos(), a * angle.sin()]
    } else {
        [0.0, 0.0]
    };
    let shape = if background {
        Shape::Background
    } else {
        let mut size = || {
            let s = if cfg.max_sprite_size > cfg.min_sprite_size {
                rng.random_range(cfg.min_sprite_size..=cfg.max_sprite_size)
            } else {
                cfg.min_sprite_size
            };
            s / 2.0
        };
        let (half_w, half_h) = (size(), size());
        if rng.random_bool(0.5) {
            Shape::Rect { half_w, half_h }
        } else {
            Shape::Ellipse { half_w, half_h }
        }
    };
    let origin = if background {
        [0.0, 0.0]
    } else {
        [
            rng.random_range(0.0..cfg.width as f32),
            rng.random_range(0.0..cfg.height as f32),
        ]
    };
    let tint = if cfg.color {
        [
            rng.random_range(0.5..=1.0),
            rng.random_range(0.5..=1.0),
            rng.random_range(0.5..=1.0),
        ]
    } else {
        [1.0; 3]
    };
    Layer {
        shape,
        origin,
        velocity,
        acceleration,
        texture_seed: rng.random(),
        texture_scale: cfg.texture_scale * rng.random_range(0.75..=1.5),
        brightness: rng.random_range(0.3..=0.7),
        contrast: rng.random_range(0.6..=1.0),
        tint,
    }
}

/// Frames and the `length - 1` ground-truth flows between them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub frames: Vec<ColorFrame>,
    pub flows: Vec<FlowField>,
}

pub fn generate_synthetic_sequence(cfg: &SyntheticConfig, rng: &mut impl Rng) -> Result<SyntheticSequence> {
    let scene = SyntheticScene::random(cfg, rng)?;
    let mut frames: Vec<ColorFrame> = (0..cfg.length).map(|t| scene.render(t)).collect();
    if cfg.noise > 0.0 {
        let normal = Normal::new(0.0, cfg.noise).map_err(|e| Error::Config(format!("noise: {e}")))?;
        for f in &mut frames {
            let n = f.channels[0].data.len();
            let gray = !cfg.color;
            for i in 0..n {
                let shared: f32 = normal.sample(rng);
                for c in 0..3 {
                    let e = if gray { shared } else if c == 0 { shared } else { normal.sample(rng) };
                    let v = &mut f.channels[c].data[i];
                    *v = (*v + e).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(SyntheticSequence {
        frames,
        flows: (0..cfg.length.saturating_sub(1)).map(|t| scene.flow(t)).collect(),
    })
}

/// `cfg.sequences` sequences; sequence `i` depends only on `(seed, i)`.
pub fn generate_synthetic_corpus(cfg: &SyntheticConfig, seed: u64) -> Result<Vec<SyntheticSequence>> {
    (0..cfg.sequences)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            generate_synthetic_sequence(cfg, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still_background() -> Layer {
        Layer {
            shape: Shape::Background,
            origin: [0.0, 0.0],
            velocity: [0.0, 0.0],
            acceleration: [0.0, 0.0],
            texture_seed: 1,
            texture_scale: 4.0,
            brightness: 0.5,
            contrast: 0.8,
            tint: [1.0; 3],
        }
    }

    #[test]
    fn single_layer_flow_is_its_velocity() {
        let mut l = still_background();
        l.velocity = [2.0, 0.0];
        let scene = SyntheticScene {
            width: 16,
            height: 8,
            layers: vec![l],
        };
        let f = scene.flow(3);
        assert!(f.u.iter().all(|&u| u == 2.0) && f.v.iter().all(|&v| v == 0.0));
        // the two rightmost columns leave the image
        assert_eq!(f.valid_count(), 14 * 8);
    }

    #[test]
    fn zero_layers_give_uniform_frames() {
        let cfg = SyntheticConfig {
            layers: 0,
            length: 3,
            ..Default::default()
        };
        let seq = generate_synthetic_sequence(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let g = seq.frames[0].to_gray();
        assert!(g.data.iter().all(|&v| v == g.data[0]));
        assert!(seq.flows.iter().all(|f| f.u.iter().chain(&f.v).all(|&x| x == 0.0)));
    }

    #[test]
    fn sprite_occludes_background() {
        let mut sprite = still_background();
        sprite.shape = Shape::Rect { half_w: 2.0, half_h: 2.0 };
        sprite.origin = [5.0, 4.0];
        sprite.velocity = [3.0, 0.0];
        let scene = SyntheticScene {
            width: 16,
            height: 8,
            layers: vec![still_background(), sprite],
        };
        let f = scene.flow(0);
        // background at x = 8..=10 gets covered by the sprite at t = 1
        for y in 2..=6 {
            for x in 8..=10 {
                assert!(!f.valid[y * 16 + x], "({x}, {y})");
            }
            assert!(f.valid[y * 16 + 12]);
            assert_eq!(f.u[y * 16 + 5], 3.0);
        }
    }
}
