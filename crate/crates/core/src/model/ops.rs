//! Per-sample convolution kernels built on im2col + SGEMM.
//!
//! All buffers are row-major. A sample is `[channels, height, width]`.
//! Column buffers are processed in bands of output rows so large inputs
//! never materialize the full im2col matrix.

use std::ops::Range;

/// Upper bound on floats held by one im2col band.
const BAND_FLOATS: usize = 1 << 22;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Window {
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

pub(crate) const SAME_3X3: Window = Window {
    k: 3,
    stride: 1,
    pad: 1,
};
pub(crate) const UP_4X4: Window = Window {
    k: 4,
    stride: 2,
    pad: 1,
};

/// `c = a·b + beta·c` with explicit row/column strides for every operand.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn band_rows(rows_per_band_cost: usize, total_rows: usize) -> usize {
    (BAND_FLOATS / rows_per_band_cost.max(1)).clamp(1, total_rows.max(1))
}

/// Valid grid-column range for kernel offset `kj` along an axis of length `len`.
#[inline]
fn valid_cols(win: Window, kj: usize, len: usize, grid: usize) -> Range<usize> {
    // x = col * stride + kj - pad must lie in [0, len)
    let lo = win.pad.saturating_sub(kj).div_ceil(win.stride);
    let hi_num = (len + win.pad) as isize - kj as isize;
    let hi = if hi_num <= 0 {
        0
    } else {
        ((hi_num as usize - 1) / win.stride + 1).min(grid)
    };
    lo.min(hi)..hi
}

/// Gather windows of `src [c, h, w]` for grid rows `rows` into `cols
/// [c*k*k, rows.len()*grid_w]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn im2col(
    src: &[f32],
    c: usize,
    h: usize,
    w: usize,
    win: Window,
    grid_w: usize,
    rows: Range<usize>,
    cols: &mut [f32],
) {
    let ncols = rows.len() * grid_w;
    let k = win.k;
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                let valid = valid_cols(win, kj, w, grid_w);
                for (ri, r) in rows.clone().enumerate() {
                    let d = &mut dst[ri * grid_w..(ri + 1) * grid_w];
                    let y = (r * win.stride + ki) as isize - win.pad as isize;
                    if y < 0 || y >= h as isize {
                        d.fill(0.0);
                        continue;
                    }
                    let srow = &plane[y as usize * w..(y as usize + 1) * w];
                    d[..valid.start].fill(0.0);
                    d[valid.end..].fill(0.0);
                    if valid.is_empty() {
                        continue;
                    }
                    if win.stride == 1 {
                        let x0 = valid.start + kj - win.pad;
                        d[valid.clone()].copy_from_slice(&srow[x0..x0 + valid.len()]);
                    } else {
                        for col in valid.clone() {
                            d[col] = srow[col * win.stride + kj - win.pad];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `cols` back into `dst [c, h, w]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im_add(
    cols: &[f32],
    c: usize,
    h: usize,
    w: usize,
    win: Window,
    grid_w: usize,
    rows: Range<usize>,
    dst: &mut [f32],
) {
    let ncols = rows.len() * grid_w;
    let k = win.k;
    for ch in 0..c {
        let plane = &mut dst[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let srcrow = &cols[row * ncols..(row + 1) * ncols];
                let valid = valid_cols(win, kj, w, grid_w);
                for (ri, r) in rows.clone().enumerate() {
                    let y = (r * win.stride + ki) as isize - win.pad as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let s = &srcrow[ri * grid_w..(ri + 1) * grid_w];
                    let drow = &mut plane[y as usize * w..(y as usize + 1) * w];
                    if valid.is_empty() {
                        continue;
                    }
                    if win.stride == 1 {
                        let x0 = valid.start + kj - win.pad;
                        for (d, v) in drow[x0..x0 + valid.len()].iter_mut().zip(&s[valid.clone()]) {
                            *d += v;
                        }
                    } else {
                        for col in valid.clone() {
                            drow[col * win.stride + kj - win.pad] += s[col];
                        }
                    }
                }
            }
        }
    }
}

fn add_bias(out: &mut [f32], bias: &[f32], plane: usize) {
    for (o, b) in out.chunks_exact_mut(plane).zip(bias) {
        o.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_bias_grad(dout: &[f32], dbias: &mut [f32], plane: usize) {
    for (d, db) in dout.chunks_exact(plane).zip(dbias.iter_mut()) {
        *db += d.iter().map(|&v| v as f64).sum::<f64>() as f32;
    }
}

/// 3x3 "same" convolution of one sample. `weight` is `[cout, cin, 3, 3]`.
pub(crate) fn conv3x3_forward(
    x: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    bias: &[f32],
    cout: usize,
    out: &mut [f32],
) {
    let kk = cin * 9;
    let hw = h * w;
    let rows_per = band_rows(kk * w, h);
    let mut cols = vec![0.0f32; kk * rows_per * w];
    let mut r0 = 0;
    while r0 < h {
        let r1 = (r0 + rows_per).min(h);
        let nc = (r1 - r0) * w;
        let cols = &mut cols[..kk * nc];
        im2col(x, cin, h, w, SAME_3X3, w, r0..r1, cols);
        gemm(
            cout,
            kk,
            nc,
            weight,
            (kk, 1),
            cols,
            (nc, 1),
            0.0,
            &mut out[r0 * w..],
            (hw, 1),
        );
        r0 = r1;
    }
    add_bias(out, bias, hw);
}

/// Backward of [`conv3x3_forward`]. Accumulates into `dweight`/`dbias`;
/// adds the input gradient into `dx` when given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3x3_backward(
    x: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    cout: usize,
    dout: &[f32],
    dweight: &mut [f32],
    dbias: &mut [f32],
    mut dx: Option<&mut [f32]>,
) {
    let kk = cin * 9;
    let hw = h * w;
    accumulate_bias_grad(dout, dbias, hw);
    let rows_per = band_rows(kk * w, h);
    let mut cols = vec![0.0f32; kk * rows_per * w];
    let mut dcols = if dx.is_some() {
        vec![0.0f32; kk * rows_per * w]
    } else {
        Vec::new()
    };
    let mut r0 = 0;
    while r0 < h {
        let r1 = (r0 + rows_per).min(h);
        let nc = (r1 - r0) * w;
        let cols = &mut cols[..kk * nc];
        im2col(x, cin, h, w, SAME_3X3, w, r0..r1, cols);
        let dchunk = &dout[r0 * w..];
        gemm(cout, nc, kk, dchunk, (hw, 1), cols, (1, nc), 1.0, dweight, (kk, 1));
        if let Some(dx) = dx.as_deref_mut() {
            let dcols = &mut dcols[..kk * nc];
            gemm(kk, cout, nc, weight, (1, kk), dchunk, (hw, 1), 0.0, dcols, (nc, 1));
            col2im_add(dcols, cin, h, w, SAME_3X3, w, r0..r1, dx);
        }
        r0 = r1;
    }
}

/// 2x transposed convolution (4x4 kernel, stride 2, padding 1) of one sample.
/// `weight` is `[cin, cout, 4, 4]`; `out` is `[cout, 2h, 2w]` and is overwritten.
pub(crate) fn up4x4_forward(
    x: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    bias: &[f32],
    cout: usize,
    out: &mut [f32],
) {
    let kk = cout * 16;
    let hw = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    out.fill(0.0);
    let rows_per = band_rows(kk * w, h);
    let mut cols = vec![0.0f32; kk * rows_per * w];
    let mut r0 = 0;
    while r0 < h {
        let r1 = (r0 + rows_per).min(h);
        let nc = (r1 - r0) * w;
        let cols = &mut cols[..kk * nc];
        gemm(kk, cin, nc, weight, (1, kk), &x[r0 * w..], (hw, 1), 0.0, cols, (nc, 1));
        col2im_add(cols, cout, oh, ow, UP_4X4, w, r0..r1, out);
        r0 = r1;
    }
    add_bias(out, bias, oh * ow);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn up4x4_backward(
    x: &[f32],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    cout: usize,
    dout: &[f32],
    dweight: &mut [f32],
    dbias: &mut [f32],
    mut dx: Option<&mut [f32]>,
) {
    let kk = cout * 16;
    let hw = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    accumulate_bias_grad(dout, dbias, oh * ow);
    let rows_per = band_rows(kk * w, h);
    let mut cols = vec![0.0f32; kk * rows_per * w];
    let mut r0 = 0;
    while r0 < h {
        let r1 = (r0 + rows_per).min(h);
        let nc = (r1 - r0) * w;
        let cols = &mut cols[..kk * nc];
        im2col(dout, cout, oh, ow, UP_4X4, w, r0..r1, cols);
        if let Some(dx) = dx.as_deref_mut() {
            gemm(cin, kk, nc, weight, (kk, 1), cols, (nc, 1), 0.0, &mut dx[r0 * w..], (hw, 1));
        }
        gemm(cin, nc, kk, &x[r0 * w..], (hw, 1), cols, (1, nc), 1.0, dweight, (kk, 1));
        r0 = r1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f32 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 40) as f32 / (1u64 << 24) as f32) - 0.5
    }

    fn randv(n: usize, seed: &mut u64) -> Vec<f32> {
        (0..n).map(|_| lcg(seed)).collect()
    }

    // Direct nested-loop definitions, independent of im2col.
    fn naive_conv3x3(x: &[f32], cin: usize, h: usize, w: usize, wt: &[f32], b: &[f32], cout: usize) -> Vec<f32> {
        let mut out = vec![0.0f32; cout * h * w];
        for o in 0..cout {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = b[o] as f64;
                    for i in 0..cin {
                        for ki in 0..3 {
                            for kj in 0..3 {
                                let sy = y as isize + ki as isize - 1;
                                let sx = xx as isize + kj as isize - 1;
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    acc += (wt[((o * cin + i) * 3 + ki) * 3 + kj]
                                        * x[(i * h + sy as usize) * w + sx as usize])
                                        as f64;
                                }
                            }
                        }
                    }
                    out[(o * h + y) * w + xx] = acc as f32;
                }
            }
        }
        out
    }

    fn naive_up(x: &[f32], cin: usize, h: usize, w: usize, wt: &[f32], b: &[f32], cout: usize) -> Vec<f32> {
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0f64; cout * oh * ow];
        for i in 0..cin {
            for r in 0..h {
                for c in 0..w {
                    for o in 0..cout {
                        for ki in 0..4 {
                            for kj in 0..4 {
                                let y = (2 * r + ki) as isize - 1;
                                let xx = (2 * c + kj) as isize - 1;
                                if y >= 0 && y < oh as isize && xx >= 0 && xx < ow as isize {
                                    out[(o * oh + y as usize) * ow + xx as usize] += (x[(i * h + r) * w + c]
                                        * wt[((i * cout + o) * 4 + ki) * 4 + kj])
                                        as f64;
                                }
                            }
                        }
                    }
                }
            }
        }
        for o in 0..cout {
            for v in &mut out[o * oh * ow..(o + 1) * oh * ow] {
                *v += b[o] as f64;
            }
        }
        out.into_iter().map(|v| v as f32).collect()
    }

    #[test]
    fn conv3x3_matches_naive() {
        let mut s = 1;
        let (cin, cout, h, w) = (3, 5, 6, 7);
        let x = randv(cin * h * w, &mut s);
        let wt = randv(cout * cin * 9, &mut s);
        let b = randv(cout, &mut s);
        let mut out = vec![0.0; cout * h * w];
        conv3x3_forward(&x, cin, h, w, &wt, &b, cout, &mut out);
        let want = naive_conv3x3(&x, cin, h, w, &wt, &b, cout);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn up4x4_matches_naive() {
        let mut s = 2;
        let (cin, cout, h, w) = (3, 2, 4, 5);
        let x = randv(cin * h * w, &mut s);
        let wt = randv(cin * cout * 16, &mut s);
        let b = randv(cout, &mut s);
        let mut out = vec![0.0; cout * 4 * h * w];
        up4x4_forward(&x, cin, h, w, &wt, &b, cout, &mut out);
        let want = naive_up(&x, cin, h, w, &wt, &b, cout);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    fn dot(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum()
    }

    // <conv(x), g> is linear in x and w, so the backward pass must satisfy the
    // adjoint identities exactly (up to rounding).
    #[test]
    fn conv3x3_backward_is_adjoint() {
        let mut s = 3;
        let (cin, cout, h, w) = (2, 3, 5, 4);
        let x = randv(cin * h * w, &mut s);
        let wt = randv(cout * cin * 9, &mut s);
        let zero_b = vec![0.0; cout];
        let g = randv(cout * h * w, &mut s);
        let mut y = vec![0.0; cout * h * w];
        conv3x3_forward(&x, cin, h, w, &wt, &zero_b, cout, &mut y);
        let mut dw = vec![0.0; wt.len()];
        let mut db = vec![0.0; cout];
        let mut dx = vec![0.0; x.len()];
        conv3x3_backward(&x, cin, h, w, &wt, cout, &g, &mut dw, &mut db, Some(&mut dx));
        let lhs = dot(&y, &g);
        assert!((lhs - dot(&dx, &x)).abs() < 1e-4);
        assert!((lhs - dot(&dw, &wt)).abs() < 1e-4);
        let gsum: Vec<f64> = g.chunks(h * w).map(|c| c.iter().map(|&v| v as f64).sum()).collect();
        for (a, b) in db.iter().zip(gsum) {
            assert!((*a as f64 - b).abs() < 1e-4);
        }
    }

    #[test]
    fn up4x4_backward_is_adjoint() {
        let mut s = 4;
        let (cin, cout, h, w) = (3, 2, 3, 4);
        let x = randv(cin * h * w, &mut s);
        let wt = randv(cin * cout * 16, &mut s);
        let zero_b = vec![0.0; cout];
        let g = randv(cout * 4 * h * w, &mut s);
        let mut y = vec![0.0; g.len()];
        up4x4_forward(&x, cin, h, w, &wt, &zero_b, cout, &mut y);
        let mut dw = vec![0.0; wt.len()];
        let mut db = vec![0.0; cout];
        let mut dx = vec![0.0; x.len()];
        up4x4_backward(&x, cin, h, w, &wt, cout, &g, &mut dw, &mut db, Some(&mut dx));
        let lhs = dot(&y, &g);
        assert!((lhs - dot(&dx, &x)).abs() < 1e-4);
        assert!((lhs - dot(&dw, &wt)).abs() < 1e-4);
    }

    #[test]
    fn banding_does_not_change_results() {
        // Enough channels that a band holds fewer rows than the image.
        let mut s = 5;
        let (cin, cout, h, w) = (520, 1, 40, 32);
        assert!(band_rows(cin * 9 * w, h) < h);
        let x = randv(cin * h * w, &mut s);
        let wt = randv(cout * cin * 9, &mut s);
        let b = vec![0.0];
        let mut out = vec![0.0; cout * h * w];
        conv3x3_forward(&x, cin, h, w, &wt, &b, cout, &mut out);
        let want = naive_conv3x3(&x, cin, h, w, &wt, &b, cout);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
