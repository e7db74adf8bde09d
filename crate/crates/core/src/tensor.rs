//! Batched feature maps.
//!
//! [`Tensor4`] is the value type flowing through the network: a dense
//! row-major `batch x channels x rows x cols` buffer of f64. All layer
//! arithmetic in this crate runs at 64-bit precision.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::shape(format!(
                "tensor data length {} does not match {n}x{c}x{h}x{w}",
                data.len()
            )));
        }
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::invalid("tensor dimensions must be positive"));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("tensor entries must be finite"));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn batch(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    /// Contiguous `h*w` slice for one (sample, channel) plane.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let start = (n * self.c + c) * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let start = (n * self.c + c) * self.h * self.w;
        let len = self.h * self.w;
        &mut self.data[start..start + len]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Reinterpret the per-sample extent as a new (c, h, w); element count
    /// and order are preserved.
    pub fn reshaped(&self, c: usize, h: usize, w: usize) -> Result<Tensor4> {
        if c * h * w != self.c * self.h * self.w {
            return Err(Error::shape(format!(
                "cannot reshape {}x{}x{} into {c}x{h}x{w}",
                self.c, self.h, self.w
            )));
        }
        Ok(Tensor4 {
            n: self.n,
            c,
            h,
            w,
            data: self.data.clone(),
        })
    }

    /// Extract a single sample as a batch of one.
    pub fn sample(&self, n: usize) -> Tensor4 {
        let stride = self.c * self.h * self.w;
        Tensor4 {
            n: 1,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data[n * stride..(n + 1) * stride].to_vec(),
        }
    }

    /// Stack batches of identical (c, h, w).
    pub fn concat_batch(parts: &[Tensor4]) -> Result<Tensor4> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot concat an empty batch list"))?;
        let (_, c, h, w) = first.shape();
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            if p.c != c || p.h != h || p.w != w {
                return Err(Error::shape("concat_batch parts disagree on (c,h,w)"));
            }
            data.extend_from_slice(&p.data);
            n += p.n;
        }
        Ok(Tensor4 { n, c, h, w, data })
    }
}
