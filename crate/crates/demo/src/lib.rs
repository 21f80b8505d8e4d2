//! WebAssembly bindings for a small interactive page: render a synthetic
//! scene, show its ground-truth flow on the color wheel, and score linear
//! blending of the neighbouring frames against the true middle frame.

use interflow::data::{SyntheticConfig, SyntheticScene};
use interflow::evaluation::{color_scores, linear_blend};
use interflow::flowio::{color_frame_to_rgb, flow_to_color, RgbImage};
use interflow::FlowField;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn to_rgba(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.width * img.height * 4);
    for y in 0..img.height {
        for x in 0..img.width {
            out.extend_from_slice(&img.pixel(x, y));
            out.push(255);
        }
    }
    out
}

/// A seeded synthetic scene that can be rendered at any frame index.
#[wasm_bindgen]
pub struct Scene {
    scene: SyntheticScene,
}

#[wasm_bindgen]
impl Scene {
    /// `speed` is the exact speed of every layer in px/frame.
    #[wasm_bindgen(constructor)]
    pub fn new(width: usize, height: usize, layers: usize, speed: f32, texture_scale: f32, seed: u64) -> Result<Scene, JsError> {
        Ok(Scene::try_new(width, height, layers, speed, texture_scale, seed)?)
    }

    pub fn width(&self) -> usize {
        self.scene.width
    }

    pub fn height(&self) -> usize {
        self.scene.height
    }

    /// RGBA pixels of frame `t`.
    pub fn frame_rgba(&self, t: usize) -> Vec<u8> {
        to_rgba(&color_frame_to_rgb(&self.scene.render(t)))
    }

    /// RGBA color-wheel rendering of the flow from `t` to `t + 1`; occluded
    /// pixels are black.
    pub fn flow_rgba(&self, t: usize, max_magnitude: f32) -> Vec<u8> {
        let max = (max_magnitude > 0.0).then_some(max_magnitude);
        to_rgba(&flow_to_color(&self.scene.flow(t), max))
    }

    /// RGBA of the average of frames `t - 1` and `t + 1`.
    pub fn blend_rgba(&self, t: usize) -> Vec<u8> {
        to_rgba(&color_frame_to_rgb(&self.blend(t)))
    }

    /// PSNR in dB of the blend against the true frame `t` (capped at 99).
    pub fn blend_psnr(&self, t: usize) -> Result<f64, JsError> {
        Ok(self.psnr(t)?)
    }
}

impl Scene {
    pub fn try_new(
        width: usize,
        height: usize,
        layers: usize,
        speed: f32,
        texture_scale: f32,
        seed: u64,
    ) -> interflow::Result<Scene> {
        let cfg = SyntheticConfig {
            width,
            height,
            layers,
            min_speed: speed,
            max_speed: speed,
            texture_scale,
            color: true,
            ..SyntheticConfig::default()
        };
        let scene = SyntheticScene::random(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(Scene { scene })
    }

    pub fn psnr(&self, t: usize) -> interflow::Result<f64> {
        Ok(color_scores(&self.blend(t), &self.scene.render(t))?.0)
    }

    fn blend(&self, t: usize) -> interflow::ColorFrame {
        let t = t.max(1);
        linear_blend(&self.scene.render(t - 1), &self.scene.render(t + 1))
    }

    pub fn flow(&self, t: usize) -> FlowField {
        self.scene.flow(t)
    }
}

/// RGBA legend: the flow color of every offset inside a disc of radius `size / 2`.
#[wasm_bindgen]
pub fn color_wheel_rgba(size: usize) -> Vec<u8> {
    let r = size as f32 / 2.0;
    let (mut u, mut v, mut valid) = (Vec::new(), Vec::new(), Vec::new());
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f32 + 0.5 - r, y as f32 + 0.5 - r);
            u.push(dx);
            v.push(dy);
            valid.push(dx.hypot(dy) <= r);
        }
    }
    let wheel = FlowField::new(size, size, u, v, valid).expect("matching lengths");
    to_rgba(&flow_to_color(&wheel, Some(r)))
}
