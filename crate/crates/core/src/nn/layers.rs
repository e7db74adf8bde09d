//! Forward and backward passes for the non-convolutional layer families:
//! pooling, batch normalization, activations, padding, resize/scale
//! lambdas, concatenation, reshape, and fully connected.

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

pub fn relu_forward(x: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = x.shape();
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor4::from_vec(n, c, h, w, data).expect("shape preserved")
}

pub fn relu_backward(grad_out: &Tensor4, input: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = input.shape();
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor4::from_vec(n, c, h, w, data).expect("shape preserved")
}

// ---------------------------------------------------------------------------
// Softmax over channels
// ---------------------------------------------------------------------------

/// Channel-wise softmax at every spatial position (per-pixel distribution
/// for feature maps, per-sample distribution for 1x1 heads).
pub fn softmax_forward(x: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = x.shape();
    let mut out = Tensor4::zeros(n, c, h, w);
    let hw = h * w;
    for b in 0..n {
        for pos in 0..hw {
            let mut maxv = f64::NEG_INFINITY;
            for ch in 0..c {
                maxv = maxv.max(x.plane(b, ch)[pos]);
            }
            let mut sum = 0.0;
            for ch in 0..c {
                let e = (x.plane(b, ch)[pos] - maxv).exp();
                out.plane_mut(b, ch)[pos] = e;
                sum += e;
            }
            for ch in 0..c {
                out.plane_mut(b, ch)[pos] /= sum;
            }
        }
    }
    out
}

/// Backward through softmax given its own output `y`:
/// `dz_c = y_c * (g_c - sum_k g_k y_k)`.
pub fn softmax_backward(grad_out: &Tensor4, y: &Tensor4) -> Tensor4 {
    let (n, c, h, w) = y.shape();
    let mut out = Tensor4::zeros(n, c, h, w);
    let hw = h * w;
    for b in 0..n {
        for pos in 0..hw {
            let mut dot = 0.0;
            for ch in 0..c {
                dot += grad_out.plane(b, ch)[pos] * y.plane(b, ch)[pos];
            }
            for ch in 0..c {
                let yv = y.plane(b, ch)[pos];
                out.plane_mut(b, ch)[pos] = yv * (grad_out.plane(b, ch)[pos] - dot);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

pub fn pool_output_size(h: usize, w: usize, size: usize, stride: usize) -> Result<(usize, usize)> {
    if size == 0 || stride == 0 {
        return Err(Error::invalid("pool size and stride must be positive"));
    }
    if h < size || w < size {
        return Err(Error::shape(format!(
            "pool window {size} larger than input {h}x{w}"
        )));
    }
    Ok(((h - size) / stride + 1, (w - size) / stride + 1))
}

/// Max pooling; returns the output and the flat input index of each winner
/// for the backward pass.
pub fn maxpool_forward(x: &Tensor4, size: usize, stride: usize) -> Result<(Tensor4, Vec<u32>)> {
    let (n, c, h, w) = x.shape();
    let (oh, ow) = pool_output_size(h, w, size, stride)?;
    let mut out = Tensor4::zeros(n, c, oh, ow);
    let mut argmax = vec![0u32; n * c * oh * ow];
    let mut cursor = 0usize;
    for b in 0..n {
        for ch in 0..c {
            let plane = x.plane(b, ch);
            let base = ((b * c + ch) * h * w) as u32;
            let oplane = out.plane_mut(b, ch);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for dy in 0..size {
                        let iy = oy * stride + dy;
                        for dx in 0..size {
                            let ix = ox * stride + dx;
                            let v = plane[iy * w + ix];
                            if v > best {
                                best = v;
                                best_idx = iy * w + ix;
                            }
                        }
                    }
                    oplane[oy * ow + ox] = best;
                    argmax[cursor] = base + best_idx as u32;
                    cursor += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool_backward(
    grad_out: &Tensor4,
    argmax: &[u32],
    input_shape: (usize, usize, usize, usize),
) -> Tensor4 {
    let (n, c, h, w) = input_shape;
    let mut grad = Tensor4::zeros(n, c, h, w);
    let gdata = grad.data_mut();
    for (g, &idx) in grad_out.data().iter().zip(argmax) {
        gdata[idx as usize] += g;
    }
    grad
}

pub fn avgpool_forward(x: &Tensor4, size: usize, stride: usize) -> Result<Tensor4> {
    let (n, c, h, w) = x.shape();
    let (oh, ow) = pool_output_size(h, w, size, stride)?;
    let inv = 1.0 / (size * size) as f64;
    let mut out = Tensor4::zeros(n, c, oh, ow);
    for b in 0..n {
        for ch in 0..c {
            let plane = x.plane(b, ch);
            let oplane = out.plane_mut(b, ch);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for dy in 0..size {
                        let iy = oy * stride + dy;
                        for dx in 0..size {
                            acc += plane[iy * w + ox * stride + dx];
                        }
                    }
                    oplane[oy * ow + ox] = acc * inv;
                }
            }
        }
    }
    Ok(out)
}

pub fn avgpool_backward(
    grad_out: &Tensor4,
    size: usize,
    stride: usize,
    input_shape: (usize, usize, usize, usize),
) -> Tensor4 {
    let (n, c, h, w) = input_shape;
    let (_, _, oh, ow) = grad_out.shape();
    let inv = 1.0 / (size * size) as f64;
    let mut grad = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            let gout = grad_out.plane(b, ch);
            let gin = grad.plane_mut(b, ch);
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = gout[oy * ow + ox] * inv;
                    for dy in 0..size {
                        let iy = oy * stride + dy;
                        for dx in 0..size {
                            gin[iy * w + ox * stride + dx] += g;
                        }
                    }
                }
            }
        }
    }
    grad
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

pub const BN_EPS: f64 = 1e-5;
/// Weight on the history when updating running statistics.
pub const BN_MOMENTUM: f64 = 0.9;

/// Values cached by the training-mode forward for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub xhat: Tensor4,
}

/// Training-mode batch norm: normalize by per-channel batch statistics,
/// update the running statistics in place.
pub fn batchnorm_forward_train(
    x: &Tensor4,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &mut [f64],
    running_var: &mut [f64],
) -> (Tensor4, BnCache) {
    let (n, c, h, w) = x.shape();
    let m = (n * h * w) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut sum = 0.0;
        for b in 0..n {
            sum += x.plane(b, ch).iter().sum::<f64>();
        }
        mean[ch] = sum / m;
        let mut sq = 0.0;
        for b in 0..n {
            for &v in x.plane(b, ch) {
                sq += (v - mean[ch]) * (v - mean[ch]);
            }
        }
        var[ch] = sq / m;
        running_mean[ch] = BN_MOMENTUM * running_mean[ch] + (1.0 - BN_MOMENTUM) * mean[ch];
        running_var[ch] = BN_MOMENTUM * running_var[ch] + (1.0 - BN_MOMENTUM) * var[ch];
    }
    let mut xhat = Tensor4::zeros(n, c, h, w);
    let mut out = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            let inv_std = 1.0 / (var[ch] + BN_EPS).sqrt();
            let (g, bt, mu) = (gamma[ch], beta[ch], mean[ch]);
            let xp = x.plane(b, ch);
            let hp = xhat.plane_mut(b, ch);
            for (o, &v) in hp.iter_mut().zip(xp) {
                *o = (v - mu) * inv_std;
            }
            let op = out.plane_mut(b, ch);
            for (o, &v) in op.iter_mut().zip(&*hp) {
                *o = g * v + bt;
            }
        }
    }
    (out, BnCache { mean, var, xhat })
}

/// Inference-mode batch norm using the stored running statistics.
pub fn batchnorm_forward_eval(
    x: &Tensor4,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> Tensor4 {
    let (n, c, h, w) = x.shape();
    let mut out = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            let inv_std = 1.0 / (running_var[ch] + BN_EPS).sqrt();
            let (g, bt, mu) = (gamma[ch], beta[ch], running_mean[ch]);
            let xp = x.plane(b, ch);
            let op = out.plane_mut(b, ch);
            for (o, &v) in op.iter_mut().zip(xp) {
                *o = g * (v - mu) * inv_std + bt;
            }
        }
    }
    out
}

/// Backward through training-mode batch norm (gradients flow through the
/// batch statistics).
pub fn batchnorm_backward(
    grad_out: &Tensor4,
    cache: &BnCache,
    gamma: &[f64],
) -> (Tensor4, Vec<f64>, Vec<f64>) {
    let (n, c, h, w) = cache.xhat.shape();
    let m = (n * h * w) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let mut grad = Tensor4::zeros(n, c, h, w);
    for ch in 0..c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for b in 0..n {
            for (&g, &xh) in grad_out.plane(b, ch).iter().zip(cache.xhat.plane(b, ch)) {
                sum_g += g;
                sum_gx += g * xh;
            }
        }
        dbeta[ch] = sum_g;
        dgamma[ch] = sum_gx;
        let inv_std = 1.0 / (cache.var[ch] + BN_EPS).sqrt();
        let scale = gamma[ch] * inv_std;
        let mean_g = sum_g / m;
        let mean_gx = sum_gx / m;
        for b in 0..n {
            let gp = grad_out.plane(b, ch);
            let xp = cache.xhat.plane(b, ch);
            let op = grad.plane_mut(b, ch);
            for ((o, &g), &xh) in op.iter_mut().zip(gp).zip(xp) {
                *o = scale * (g - mean_g - xh * mean_gx);
            }
        }
    }
    (grad, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// Zero padding
// ---------------------------------------------------------------------------

pub fn zero_pad_forward(
    x: &Tensor4,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> Tensor4 {
    let (n, c, h, w) = x.shape();
    let (oh, ow) = (h + top + bottom, w + left + right);
    let mut out = Tensor4::zeros(n, c, oh, ow);
    for b in 0..n {
        for ch in 0..c {
            let xp = x.plane(b, ch);
            let op = out.plane_mut(b, ch);
            for y in 0..h {
                let orow = &mut op[(y + top) * ow + left..(y + top) * ow + left + w];
                orow.copy_from_slice(&xp[y * w..(y + 1) * w]);
            }
        }
    }
    out
}

pub fn zero_pad_backward(
    grad_out: &Tensor4,
    top: usize,
    left: usize,
    input_shape: (usize, usize, usize, usize),
) -> Tensor4 {
    let (n, c, h, w) = input_shape;
    let (_, _, _, ow) = grad_out.shape();
    let mut grad = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            let gp = grad_out.plane(b, ch);
            let op = grad.plane_mut(b, ch);
            for y in 0..h {
                let grow = &gp[(y + top) * ow + left..(y + top) * ow + left + w];
                op[y * w..(y + 1) * w].copy_from_slice(grow);
            }
        }
    }
    grad
}

// ---------------------------------------------------------------------------
// Lambda layers: bilinear upsample and scalar scale
// ---------------------------------------------------------------------------

/// Source coordinate and interpolation weights for one output index.
fn bilinear_taps(out_idx: usize, factor: usize, in_len: usize) -> (usize, usize, f64) {
    let src = ((out_idx as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (in_len - 1) as f64);
    let lo = src.floor() as usize;
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, src - lo as f64)
}

pub fn upsample_forward(x: &Tensor4, factor: usize) -> Result<Tensor4> {
    if factor == 0 {
        return Err(Error::invalid("upsample factor must be positive"));
    }
    let (n, c, h, w) = x.shape();
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor4::zeros(n, c, oh, ow);
    for b in 0..n {
        for ch in 0..c {
            let xp = x.plane(b, ch);
            let op = out.plane_mut(b, ch);
            for oy in 0..oh {
                let (y0, y1, fy) = bilinear_taps(oy, factor, h);
                for ox in 0..ow {
                    let (x0, x1, fx) = bilinear_taps(ox, factor, w);
                    op[oy * ow + ox] = xp[y0 * w + x0] * (1.0 - fy) * (1.0 - fx)
                        + xp[y0 * w + x1] * (1.0 - fy) * fx
                        + xp[y1 * w + x0] * fy * (1.0 - fx)
                        + xp[y1 * w + x1] * fy * fx;
                }
            }
        }
    }
    Ok(out)
}

pub fn upsample_backward(
    grad_out: &Tensor4,
    factor: usize,
    input_shape: (usize, usize, usize, usize),
) -> Tensor4 {
    let (n, c, h, w) = input_shape;
    let (_, _, oh, ow) = grad_out.shape();
    let mut grad = Tensor4::zeros(n, c, h, w);
    for b in 0..n {
        for ch in 0..c {
            let gp = grad_out.plane(b, ch);
            let op = grad.plane_mut(b, ch);
            for oy in 0..oh {
                let (y0, y1, fy) = bilinear_taps(oy, factor, h);
                for ox in 0..ow {
                    let (x0, x1, fx) = bilinear_taps(ox, factor, w);
                    let g = gp[oy * ow + ox];
                    op[y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
                    op[y0 * w + x1] += g * (1.0 - fy) * fx;
                    op[y1 * w + x0] += g * fy * (1.0 - fx);
                    op[y1 * w + x1] += g * fy * fx;
                }
            }
        }
    }
    grad
}

pub fn scale_forward(x: &Tensor4, factor: f64) -> Tensor4 {
    let (n, c, h, w) = x.shape();
    let data = x.data().iter().map(|&v| v * factor).collect();
    Tensor4::from_vec(n, c, h, w, data).expect("shape preserved")
}

pub fn scale_backward(grad_out: &Tensor4, factor: f64) -> Tensor4 {
    scale_forward(grad_out, factor)
}

// ---------------------------------------------------------------------------
// Concatenation along channels
// ---------------------------------------------------------------------------

pub fn concat_forward(parts: &[&Tensor4]) -> Result<Tensor4> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid("concat needs at least one input"))?;
    let (n, _, h, w) = first.shape();
    let mut total_c = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.shape();
        if pn != n || ph != h || pw != w {
            return Err(Error::shape(
                "concat inputs disagree on batch or spatial size",
            ));
        }
        total_c += pc;
    }
    let mut out = Tensor4::zeros(n, total_c, h, w);
    for b in 0..n {
        let mut ch_off = 0;
        for p in parts {
            for ch in 0..p.channels() {
                out.plane_mut(b, ch_off + ch)
                    .copy_from_slice(p.plane(b, ch));
            }
            ch_off += p.channels();
        }
    }
    Ok(out)
}

pub fn concat_backward(grad_out: &Tensor4, channel_splits: &[usize]) -> Vec<Tensor4> {
    let (n, _, h, w) = grad_out.shape();
    let mut grads = Vec::with_capacity(channel_splits.len());
    let mut ch_off = 0;
    for &pc in channel_splits {
        let mut g = Tensor4::zeros(n, pc, h, w);
        for b in 0..n {
            for ch in 0..pc {
                g.plane_mut(b, ch)
                    .copy_from_slice(grad_out.plane(b, ch_off + ch));
            }
        }
        ch_off += pc;
        grads.push(g);
    }
    grads
}

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

/// Dense layer over flattened features: input (N, F, 1, 1), weight
/// `[out][in]`, bias `[out]`.
pub fn fully_connected_forward(x: &Tensor4, weight: &[f64], bias: &[f64]) -> Result<Tensor4> {
    let (n, f, h, w) = x.shape();
    if h != 1 || w != 1 {
        return Err(Error::shape(
            "fully connected input must be flattened to (F,1,1)",
        ));
    }
    let out_features = bias.len();
    if weight.len() != out_features * f {
        return Err(Error::shape(format!(
            "dense weight length {} does not match {out_features}x{f}",
            weight.len()
        )));
    }
    let mut out = Tensor4::zeros(n, out_features, 1, 1);
    for b in 0..n {
        for o in 0..out_features {
            let mut acc = bias[o];
            let wrow = &weight[o * f..(o + 1) * f];
            for (i, &wv) in wrow.iter().enumerate() {
                acc += wv * x.at(b, i, 0, 0);
            }
            *out.at_mut(b, o, 0, 0) = acc;
        }
    }
    Ok(out)
}

pub fn fully_connected_backward(
    grad_out: &Tensor4,
    x: &Tensor4,
    weight: &[f64],
) -> (Tensor4, Vec<f64>, Vec<f64>) {
    let (n, f, _, _) = x.shape();
    let (_, out_features, _, _) = grad_out.shape();
    let mut grad_x = Tensor4::zeros(n, f, 1, 1);
    let mut grad_w = vec![0.0; weight.len()];
    let mut grad_b = vec![0.0; out_features];
    for b in 0..n {
        for o in 0..out_features {
            let g = grad_out.at(b, o, 0, 0);
            grad_b[o] += g;
            let wrow = &weight[o * f..(o + 1) * f];
            for i in 0..f {
                grad_w[o * f + i] += g * x.at(b, i, 0, 0);
                *grad_x.at_mut(b, i, 0, 0) += g * wrow[i];
            }
        }
    }
    (grad_x, grad_w, grad_b)
}
