//! Atrous (dilated) 2-D convolution, forward and backward.
//!
//! The kernel is applied in convolution orientation with a common dilation
//! rate `r` on both axes: an output pixel at (y, x) accumulates
//! `k(i, j) * f(y - r*(i - ci), x - r*(j - cj))` over all taps, where
//! (ci, cj) = (kh/2, kw/2) centers the tap grid so that a 1x1 kernel is the
//! identity at any dilation and `Same` padding preserves the spatial size.
//! Out-of-range samples read as zero. With r = 1 this is a standard dense
//! convolution.
//!
//! Tap contributions accumulate in (in-channel, tap-row, tap-col) order;
//! the oracle tests rely on that order for bit-exact comparison.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Padding {
    /// Zero padding sized so the output spatial size equals the input.
    Same,
    /// No padding; the output shrinks by `r*(k-1)` per axis.
    Valid,
}

/// A dilated convolution kernel: weights `[out_ch][in_ch][kh][kw]` plus a
/// per-output-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub out_ch: usize,
    pub in_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub dilation: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvKernel {
    pub fn new(
        out_ch: usize,
        in_ch: usize,
        kh: usize,
        kw: usize,
        dilation: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if kh == 0 || kw == 0 {
            return Err(Error::invalid("kernel extents must be at least 1"));
        }
        if dilation == 0 {
            return Err(Error::invalid("dilation rate must be at least 1"));
        }
        if weight.len() != out_ch * in_ch * kh * kw {
            return Err(Error::shape(format!(
                "kernel weight length {} does not match {out_ch}x{in_ch}x{kh}x{kw}",
                weight.len()
            )));
        }
        if bias.len() != out_ch {
            return Err(Error::shape("bias length must equal out_ch"));
        }
        Ok(ConvKernel {
            out_ch,
            in_ch,
            kh,
            kw,
            dilation,
            weight,
            bias,
        })
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weight, &mut self.bias)
    }

    /// Elementwise accumulation; used when summing gradients.
    pub fn add_assign(&mut self, weight: &[f64], bias: &[f64]) {
        for (a, b) in self.weight.iter_mut().zip(weight) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(bias) {
            *a += b;
        }
    }

    #[inline]
    pub fn w(&self, oc: usize, ic: usize, ki: usize, kj: usize) -> f64 {
        self.weight[((oc * self.in_ch + ic) * self.kh + ki) * self.kw + kj]
    }
}

/// Output spatial size for the given padding.
pub fn conv_output_size(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    r: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => Ok((h, w)),
        Padding::Valid => {
            let dh = r * (kh - 1);
            let dw = r * (kw - 1);
            if h <= dh || w <= dw {
                return Err(Error::shape(format!(
                    "valid convolution needs input larger than {dh}x{dw}, got {h}x{w}"
                )));
            }
            Ok((h - dh, w - dw))
        }
    }
}

pub fn atrous_conv_forward(x: &Tensor4, k: &ConvKernel, padding: Padding) -> Result<Tensor4> {
    let (n, c, h, w) = x.shape();
    if c != k.in_ch {
        return Err(Error::shape(format!(
            "conv expects {} input channels, got {c}",
            k.in_ch
        )));
    }
    let r = k.dilation;
    let (oh, ow) = conv_output_size(h, w, k.kh, k.kw, r, padding)?;
    // Offset from valid-output coordinates back to input coordinates.
    let (ci, cj) = (k.kh / 2, k.kw / 2);
    let (ylo, xlo) = match padding {
        Padding::Same => (0i64, 0i64),
        Padding::Valid => ((r * (k.kh - 1 - ci)) as i64, (r * (k.kw - 1 - cj)) as i64),
    };

    let mut out = Tensor4::zeros(n, k.out_ch, oh, ow);
    for b in 0..n {
        for oc in 0..k.out_ch {
            out.plane_mut(b, oc).fill(k.bias[oc]);
            for ic in 0..k.in_ch {
                let xin = x.plane(b, ic);
                let oplane = out.plane_mut(b, oc);
                for ki in 0..k.kh {
                    for kj in 0..k.kw {
                        let wv = k.w(oc, ic, ki, kj);
                        let dy = r as i64 * (ci as i64 - ki as i64) + ylo;
                        let dx = r as i64 * (cj as i64 - kj as i64) + xlo;
                        // Output rows whose sampled input row is in range.
                        let y0 = (-dy).max(0) as usize;
                        let y1 = ((h as i64 - dy).min(oh as i64)).max(0) as usize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = ((w as i64 - dx).min(ow as i64)).max(0) as usize;
                        if x0 >= x1 {
                            continue;
                        }
                        for y in y0..y1 {
                            let iy = (y as i64 + dy) as usize;
                            let orow = &mut oplane[y * ow + x0..y * ow + x1];
                            let irow = &xin[iy * w + (x0 as i64 + dx) as usize
                                ..iy * w + (x1 as i64 + dx) as usize];
                            for (o, &i) in orow.iter_mut().zip(irow) {
                                *o += wv * i;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of the convolution with respect to its input, weights, and bias.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Backward pass; `input` is the tensor cached from the forward call.
pub fn atrous_conv_backward(
    grad_out: &Tensor4,
    input: &Tensor4,
    k: &ConvKernel,
    padding: Padding,
) -> Result<ConvGrads> {
    let (n, c, h, w) = input.shape();
    if c != k.in_ch {
        return Err(Error::shape("cached input channel count mismatch"));
    }
    let r = k.dilation;
    let (oh, ow) = conv_output_size(h, w, k.kh, k.kw, r, padding)?;
    let (gn, gc, gh, gw) = grad_out.shape();
    if gn != n || gc != k.out_ch || gh != oh || gw != ow {
        return Err(Error::shape(format!(
            "grad_out shape {gn}x{gc}x{gh}x{gw} does not match expected {n}x{}x{oh}x{ow}",
            k.out_ch
        )));
    }
    let (ci, cj) = (k.kh / 2, k.kw / 2);
    let (ylo, xlo) = match padding {
        Padding::Same => (0i64, 0i64),
        Padding::Valid => ((r * (k.kh - 1 - ci)) as i64, (r * (k.kw - 1 - cj)) as i64),
    };

    let mut grad_input = Tensor4::zeros(n, c, h, w);
    let mut grad_weight = vec![0.0; k.weight.len()];
    let mut grad_bias = vec![0.0; k.out_ch];

    for b in 0..n {
        for oc in 0..k.out_ch {
            let gout = grad_out.plane(b, oc);
            grad_bias[oc] += gout.iter().sum::<f64>();
            for ic in 0..k.in_ch {
                let xin = input.plane(b, ic);
                let gin = grad_input.plane_mut(b, ic);
                for ki in 0..k.kh {
                    for kj in 0..k.kw {
                        let widx = ((oc * k.in_ch + ic) * k.kh + ki) * k.kw + kj;
                        let wv = k.weight[widx];
                        let dy = r as i64 * (ci as i64 - ki as i64) + ylo;
                        let dx = r as i64 * (cj as i64 - kj as i64) + xlo;
                        let y0 = (-dy).max(0) as usize;
                        let y1 = ((h as i64 - dy).min(oh as i64)).max(0) as usize;
                        let x0 = (-dx).max(0) as usize;
                        let x1 = ((w as i64 - dx).min(ow as i64)).max(0) as usize;
                        if x0 >= x1 {
                            continue;
                        }
                        let mut wsum = 0.0;
                        for y in y0..y1 {
                            let iy = (y as i64 + dy) as usize;
                            let grow = &gout[y * ow + x0..y * ow + x1];
                            let ibase = iy * w + (x0 as i64 + dx) as usize;
                            let irow = &xin[ibase..ibase + (x1 - x0)];
                            let ginrow = &mut gin[ibase..ibase + (x1 - x0)];
                            for ((gi, &g), &i) in ginrow.iter_mut().zip(grow).zip(irow) {
                                *gi += wv * g;
                                wsum += g * i;
                            }
                        }
                        grad_weight[widx] += wsum;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}
