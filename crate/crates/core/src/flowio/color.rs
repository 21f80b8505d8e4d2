use crate::flow::FlowField;

/// 8-bit interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Magnitude used for saturation when no explicit maximum is given: the 99th
/// percentile over valid pixels (or 1 for an all-zero field).
fn robust_max(flow: &FlowField) -> f32 {
    let mut mags: Vec<f32> = (0..flow.len())
        .filter(|&i| flow.valid[i])
        .map(|i| flow.u[i].hypot(flow.v[i]))
        .filter(|m| m.is_finite())
        .collect();
    if mags.is_empty() {
        return 1.0;
    }
    mags.sort_by(f32::total_cmp);
    let m = mags[((mags.len() - 1) as f32 * 0.99).round() as usize];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// HSV to RGB with `h` in degrees.
fn hsv(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Hue of a displacement in degrees, measured from +u toward +v.
pub fn flow_hue(u: f32, v: f32) -> f32 {
    v.atan2(u).to_degrees().rem_euclid(360.0)
}

/// Color-wheel rendering: hue encodes direction, saturation encodes
/// magnitude / `max_magnitude` (clamped to 1). Zero flow is white and
/// invalid pixels are black.
pub fn flow_to_color(flow: &FlowField, max_magnitude: Option<f32>) -> RgbImage {
    let max = match max_magnitude {
        Some(m) if m > 0.0 && m.is_finite() => m,
        _ => robust_max(flow),
    };
    let mut data = Vec::with_capacity(3 * flow.len());
    for i in 0..flow.len() {
        let (u, v) = (flow.u[i], flow.v[i]);
        if !flow.valid[i] || !(u.is_finite() && v.is_finite()) {
            data.extend_from_slice(&[0, 0, 0]);
            continue;
        }
        let sat = (u.hypot(v) / max).min(1.0);
        let rgb = hsv(flow_hue(u, v), sat, 1.0);
        data.extend(rgb.iter().map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    RgbImage {
        width: flow.width,
        height: flow.height,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_is_white_invalid_is_black() {
        let mut f = FlowField::constant(2, 1, 0.0, 0.0);
        f.valid[1] = false;
        let img = flow_to_color(&f, Some(1.0));
        assert_eq!(img.pixel(0, 0), [255, 255, 255]);
        assert_eq!(img.pixel(1, 0), [0, 0, 0]);
    }

    #[test]
    fn opposite_vectors_have_complementary_colors() {
        for (u, v) in [(1.0, 0.0), (0.3, -0.8), (-2.0, 1.0)] {
            let ha = flow_hue(u, v);
            let hb = flow_hue(-u, -v);
            assert!(((ha - hb).rem_euclid(360.0) - 180.0).abs() < 1e-3);
            // at full saturation complementary RGB colors sum to white
            let a = flow_to_color(&FlowField::constant(1, 1, u, v), Some(1e-3));
            let b = flow_to_color(&FlowField::constant(1, 1, -u, -v), Some(1e-3));
            for c in 0..3 {
                assert_eq!(a.data[c] as u16 + b.data[c] as u16, 255);
            }
        }
    }
}
