use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;

/// The `.flo` tag: the bytes "PIEH" read as a little-endian `f32`.
pub const FLO_MAGIC: f32 = 202021.25;
const HEADER_LEN: usize = 12;

/// Serialize to the Middlebury `.flo` layout (little-endian throughout).
pub fn encode_flo(flow: &FlowField) -> Result<Vec<u8>> {
    if let Some(i) = (0..flow.len()).find(|&i| !(flow.u[i].is_finite() && flow.v[i].is_finite())) {
        return Err(Error::Input(format!("flow value at pixel {i} is not finite")));
    }
    let w = i32::try_from(flow.width).map_err(|_| Error::Input("flow too wide for .flo".into()))?;
    let h = i32::try_from(flow.height).map_err(|_| Error::Input("flow too tall for .flo".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * flow.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for (u, v) in flow.u.iter().zip(&flow.v) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parse `.flo` bytes. The declared size is checked against the actual
/// payload length before anything is allocated. All pixels come back valid.
pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated .flo header"));
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().expect("4 bytes") };
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(Error::format(0, format!("bad .flo magic {magic}")));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(Error::format(4, format!("invalid .flo size {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let payload = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(4, "declared .flo size overflows"))?;
    let available = bytes.len() - HEADER_LEN;
    if available < payload {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated .flo payload: {available} of {payload} bytes"),
        ));
    }
    if available > payload {
        return Err(Error::format(
            (HEADER_LEN + payload) as u64,
            format!("{} trailing bytes after .flo payload", available - payload),
        ));
    }
    let n = w * h;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for px in bytes[HEADER_LEN..].chunks_exact(8) {
        u.push(f32::from_le_bytes(px[..4].try_into().expect("4 bytes")));
        v.push(f32::from_le_bytes(px[4..].try_into().expect("4 bytes")));
    }
    FlowField::new(w, h, u, v, vec![true; n])
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flo(flow)?).map_err(|e| Error::io(path, e))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    decode_flo(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
