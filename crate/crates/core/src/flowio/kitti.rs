use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Rgb};

use crate::error::{Error, Result};
use crate::flow::FlowField;

/// Stored value = displacement · 64 + 2^15.
pub const KITTI_SCALE: f32 = 64.0;
pub const KITTI_OFFSET: f32 = 32768.0;

type Rgb16 = ImageBuffer<Rgb<u16>, Vec<u16>>;

fn quantize(x: f32, clamped: &mut usize) -> u16 {
    let q = (x * KITTI_SCALE + KITTI_OFFSET).round();
    if !(0.0..=65535.0).contains(&q) {
        *clamped += 1;
    }
    if q.is_nan() {
        KITTI_OFFSET as u16
    } else {
        q.clamp(0.0, 65535.0) as u16
    }
}

fn to_image(flow: &FlowField) -> Result<Rgb16> {
    let w = u32::try_from(flow.width).map_err(|_| Error::Input("flow too wide".into()))?;
    let h = u32::try_from(flow.height).map_err(|_| Error::Input("flow too tall".into()))?;
    let mut clamped = 0;
    let mut data = Vec::with_capacity(3 * flow.len());
    for i in 0..flow.len() {
        data.push(quantize(flow.u[i], &mut clamped));
        data.push(quantize(flow.v[i], &mut clamped));
        data.push(flow.valid[i] as u16);
    }
    if clamped > 0 {
        log::warn!("{clamped} flow components outside the KITTI range were clamped");
    }
    Ok(ImageBuffer::from_raw(w, h, data).expect("buffer sized from flow"))
}

fn from_image(img: &Rgb16) -> Result<FlowField> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let n = w * h;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for px in img.pixels() {
        let [r, g, b] = px.0;
        u.push((r as f32 - KITTI_OFFSET) / KITTI_SCALE);
        v.push((g as f32 - KITTI_OFFSET) / KITTI_SCALE);
        valid.push(b > 0);
    }
    FlowField::new(w, h, u, v, valid)
}

/// Encode as a 16-bit RGB PNG (R = u, G = v, B = validity).
pub fn encode_kitti_flow(flow: &FlowField) -> Result<Vec<u8>> {
    let img = to_image(flow)?;
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn decode_kitti_flow(bytes: &[u8]) -> Result<FlowField> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    match img {
        image::DynamicImage::ImageRgb16(buf) => from_image(&buf),
        other => Err(Error::format(
            0,
            format!("KITTI flow must be 16-bit RGB, found {:?}", other.color()),
        )),
    }
}

pub fn write_kitti_flow(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_kitti_flow(flow)?).map_err(|e| Error::io(path, e))
}

pub fn read_kitti_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    decode_kitti_flow(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_constants() {
        let mut c = 0;
        assert_eq!(quantize(0.0, &mut c), 32768);
        assert_eq!(quantize(1.0, &mut c), 32832);
        assert_eq!(c, 0);
        quantize(600.0, &mut c);
        assert_eq!(c, 1);
    }

    #[test]
    fn invalid_pixels_stay_invalid() {
        let mut f = FlowField::constant(3, 2, 1.5, -2.25);
        f.valid[4] = false;
        let back = decode_kitti_flow(&encode_kitti_flow(&f).unwrap()).unwrap();
        assert_eq!(back.valid, f.valid);
        assert_eq!(back.u, f.u);
        assert_eq!(back.v, f.v);
    }

    #[test]
    fn eight_bit_png_rejected() {
        let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::new(2, 2);
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).unwrap();
        assert!(decode_kitti_flow(buf.get_ref()).is_err());
    }
}
