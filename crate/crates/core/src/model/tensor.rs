use crate::error::{Error, Result};

/// Dense `f32` batch tensor in NCHW layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            shape: [n, c, h, w],
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Stack equally sized planes into a single sample `[1, planes, h, w]`.
    pub fn from_planes(planes: &[&[f32]], h: usize, w: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(planes.len() * h * w);
        for p in planes {
            if p.len() != h * w {
                return Err(Error::Shape(format!(
                    "plane has {} values, expected {h}x{w}",
                    p.len()
                )));
            }
            data.extend_from_slice(p);
        }
        Tensor::from_vec([1, planes.len(), h, w], data)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }
    pub fn n(&self) -> usize {
        self.shape[0]
    }
    pub fn c(&self) -> usize {
        self.shape[1]
    }
    pub fn h(&self) -> usize {
        self.shape[2]
    }
    pub fn w(&self) -> usize {
        self.shape[3]
    }
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.plane_len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }
    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let len = self.plane_len();
        let start = (n * self.shape[1] + c) * len;
        &self.data[start..start + len]
    }
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let len = self.plane_len();
        let start = (n * self.shape[1] + c) * len;
        &mut self.data[start..start + len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenate along channels: `[n, ca, h, w] ++ [n, cb, h, w]`.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.n() != b.n() || a.h() != b.h() || a.w() != b.w() {
            return Err(Error::Shape(format!(
                "cannot concatenate {:?} with {:?}",
                a.shape, b.shape
            )));
        }
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        for i in 0..a.n() {
            data.extend_from_slice(a.sample(i));
            data.extend_from_slice(b.sample(i));
        }
        Ok(Tensor {
            shape: [a.n(), a.c() + b.c(), a.h(), a.w()],
            data,
        })
    }

    /// Inverse of [`Tensor::concat_channels`]: split off the first `ca` channels.
    pub fn split_channels(&self, ca: usize) -> (Tensor, Tensor) {
        let [n, c, h, w] = self.shape;
        let plane = h * w;
        let mut a = Tensor::zeros(n, ca, h, w);
        let mut b = Tensor::zeros(n, c - ca, h, w);
        for i in 0..n {
            let s = self.sample(i);
            a.sample_mut(i).copy_from_slice(&s[..ca * plane]);
            b.sample_mut(i).copy_from_slice(&s[ca * plane..]);
        }
        (a, b)
    }
}
