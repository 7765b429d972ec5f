//! Layer kernels: forward passes and their analytic gradients.
//!
//! Layout conventions: activations are NHWC, convolution weights are
//! `[kh, kw, cin, cout]`, fully-connected weights are `[din, dout]`.
//! Every kernel validates shapes up front and checks its output for
//! non-finite values before returning.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{NumericsError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

fn conv_geometry(
    in_dim: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize), NumericsError> {
    match padding {
        Padding::Same => {
            let out = in_dim.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(in_dim);
            Ok((out, total / 2))
        }
        Padding::Valid => {
            if in_dim < kernel {
                return Err(NumericsError::shape(
                    "conv2d",
                    format!("input dim {in_dim} smaller than kernel {kernel} with valid padding"),
                ));
            }
            Ok(((in_dim - kernel) / stride + 1, 0))
        }
    }
}

fn conv_check<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<(), NumericsError> {
    if input.shape().len() != 4 {
        return Err(NumericsError::shape(
            "conv2d",
            format!("expected NHWC input, got shape {:?}", input.shape()),
        ));
    }
    if weights.shape().len() != 4 {
        return Err(NumericsError::shape(
            "conv2d",
            format!("expected [kh,kw,cin,cout] weights, got {:?}", weights.shape()),
        ));
    }
    let (kh, kw, cin, cout) = (
        weights.shape()[0],
        weights.shape()[1],
        weights.shape()[2],
        weights.shape()[3],
    );
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(NumericsError::shape(
            "conv2d",
            format!("kernel dims must be odd, got {kh}x{kw}"),
        ));
    }
    if input.shape()[3] != cin {
        return Err(NumericsError::shape(
            "conv2d",
            format!("input channels {} != weight cin {}", input.shape()[3], cin),
        ));
    }
    if bias.shape() != [cout] {
        return Err(NumericsError::shape(
            "conv2d",
            format!("bias shape {:?} != [{cout}]", bias.shape()),
        ));
    }
    if stride == 0 {
        return Err(NumericsError::shape("conv2d", "stride must be positive"));
    }
    Ok(())
}

/// 2-D cross-correlation over an NHWC batch.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>, NumericsError> {
    conv_check(input, weights, bias, stride)?;
    let (n, h, w, cin) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let (kh, kw, cout) = (weights.shape()[0], weights.shape()[1], weights.shape()[3]);
    let (out_h, pad_top) = conv_geometry(h, kh, stride, padding)?;
    let (out_w, pad_left) = conv_geometry(w, kw, stride, padding)?;

    let mut out = Tensor::zeros(&[n, out_h, out_w, cout]);
    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let o = out.data_mut();

    for ni in 0..n {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let orow = &mut o[((ni * out_h + oy) * out_w + ox) * cout..][..cout];
                orow.copy_from_slice(b);
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pad_top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pad_left as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let xrow =
                            &x[((ni * h + iy as usize) * w + ix as usize) * cin..][..cin];
                        let wbase = (ky * kw + kx) * cin;
                        for (ci, &xv) in xrow.iter().enumerate() {
                            let wrow = &wt[(wbase + ci) * cout..][..cout];
                            for co in 0..cout {
                                orow[co] += xv * wrow[co];
                            }
                        }
                    }
                }
            }
        }
    }
    out.check_finite("conv2d")?;
    Ok(out)
}

pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Gradients of [`conv2d_forward`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    padding: Padding,
    grad_out: &Tensor<T>,
) -> Result<Conv2dGrads<T>, NumericsError> {
    let (n, h, w, cin) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let (kh, kw, cout) = (weights.shape()[0], weights.shape()[1], weights.shape()[3]);
    let (out_h, pad_top) = conv_geometry(h, kh, stride, padding)?;
    let (out_w, pad_left) = conv_geometry(w, kw, stride, padding)?;
    if grad_out.shape() != [n, out_h, out_w, cout] {
        return Err(NumericsError::shape(
            "conv2d_backward",
            format!(
                "grad shape {:?} != [{n}, {out_h}, {out_w}, {cout}]",
                grad_out.shape()
            ),
        ));
    }

    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weights = Tensor::zeros(weights.shape());
    let mut d_bias = Tensor::zeros(&[cout]);
    let x = input.data();
    let wt = weights.data();
    let g = grad_out.data();
    let dx = d_input.data_mut();
    let dw = d_weights.data_mut();
    let db = d_bias.data_mut();

    for ni in 0..n {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let grow = &g[((ni * out_h + oy) * out_w + ox) * cout..][..cout];
                for co in 0..cout {
                    db[co] += grow[co];
                }
                for ky in 0..kh {
                    let iy = (oy * stride + ky) as isize - pad_top as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * stride + kx) as isize - pad_left as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let in_off = ((ni * h + iy as usize) * w + ix as usize) * cin;
                        let wbase = (ky * kw + kx) * cin;
                        for ci in 0..cin {
                            let xv = x[in_off + ci];
                            let wrow = &wt[(wbase + ci) * cout..][..cout];
                            let dwrow = &mut dw[(wbase + ci) * cout..][..cout];
                            let mut acc = T::zero();
                            for co in 0..cout {
                                acc += wrow[co] * grow[co];
                                dwrow[co] += xv * grow[co];
                            }
                            dx[in_off + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(Conv2dGrads {
        input: d_input,
        weights: d_weights,
        bias: d_bias,
    })
}

fn pool_check<T: Scalar>(
    input: &Tensor<T>,
    size: usize,
    stride: usize,
) -> Result<(usize, usize, usize, usize, usize, usize), NumericsError> {
    if input.shape().len() != 4 {
        return Err(NumericsError::shape(
            "pool2d",
            format!("expected NHWC input, got {:?}", input.shape()),
        ));
    }
    let (n, h, w, c) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    if h < size || w < size {
        return Err(NumericsError::shape(
            "pool2d",
            format!("spatial dims {h}x{w} smaller than window {size}"),
        ));
    }
    if size == 0 || stride == 0 {
        return Err(NumericsError::shape("pool2d", "size and stride must be positive"));
    }
    // Floor division; ragged edges are dropped.
    let out_h = (h - size) / stride + 1;
    let out_w = (w - size) / stride + 1;
    Ok((n, h, w, c, out_h, out_w))
}

/// Windowed max/average reduction over the spatial dims.
pub fn pool2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kind: PoolKind,
    size: usize,
    stride: usize,
) -> Result<Tensor<T>, NumericsError> {
    let (n, h, w, c, out_h, out_w) = pool_check(input, size, stride)?;
    let mut out = Tensor::zeros(&[n, out_h, out_w, c]);
    let x = input.data();
    let o = out.data_mut();
    let window = T::from_usize(size * size).unwrap();

    for ni in 0..n {
        for oy in 0..out_h {
            for ox in 0..out_w {
                for ch in 0..c {
                    let mut acc = match kind {
                        PoolKind::Max => T::neg_infinity(),
                        PoolKind::Avg => T::zero(),
                    };
                    for ky in 0..size {
                        let iy = oy * stride + ky;
                        for kx in 0..size {
                            let ix = ox * stride + kx;
                            let v = x[((ni * h + iy) * w + ix) * c + ch];
                            acc = match kind {
                                PoolKind::Max => acc.max(v),
                                PoolKind::Avg => acc + v,
                            };
                        }
                    }
                    if kind == PoolKind::Avg {
                        acc /= window;
                    }
                    o[((ni * out_h + oy) * out_w + ox) * c + ch] = acc;
                }
            }
        }
    }
    out.check_finite("pool2d")?;
    Ok(out)
}

/// Gradient of [`pool2d_forward`]: routed to the argmax for max pooling
/// (first hit in scan order on ties), spread uniformly for average.
pub fn pool2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kind: PoolKind,
    size: usize,
    stride: usize,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NumericsError> {
    let (n, h, w, c, out_h, out_w) = pool_check(input, size, stride)?;
    if grad_out.shape() != [n, out_h, out_w, c] {
        return Err(NumericsError::shape(
            "pool2d_backward",
            format!("grad shape {:?} != [{n}, {out_h}, {out_w}, {c}]", grad_out.shape()),
        ));
    }
    let mut d_input = Tensor::zeros(input.shape());
    let x = input.data();
    let g = grad_out.data();
    let dx = d_input.data_mut();
    let window = T::from_usize(size * size).unwrap();

    for ni in 0..n {
        for oy in 0..out_h {
            for ox in 0..out_w {
                for ch in 0..c {
                    let gv = g[((ni * out_h + oy) * out_w + ox) * c + ch];
                    match kind {
                        PoolKind::Avg => {
                            let share = gv / window;
                            for ky in 0..size {
                                let iy = oy * stride + ky;
                                for kx in 0..size {
                                    let ix = ox * stride + kx;
                                    let off = ((ni * h + iy) * w + ix) * c + ch;
                                    dx[off] += share;
                                }
                            }
                        }
                        PoolKind::Max => {
                            let mut best = T::neg_infinity();
                            let mut best_off = 0;
                            for ky in 0..size {
                                let iy = oy * stride + ky;
                                for kx in 0..size {
                                    let ix = ox * stride + kx;
                                    let off = ((ni * h + iy) * w + ix) * c + ch;
                                    if x[off] > best {
                                        best = x[off];
                                        best_off = off;
                                    }
                                }
                            }
                            dx[best_off] += gv;
                        }
                    }
                }
            }
        }
    }
    Ok(d_input)
}

/// Running statistics owned by one batch-norm layer.
#[derive(Debug, Clone)]
pub struct BatchNormState<T> {
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
        }
    }
}

/// Intermediates cached by a train-mode forward pass.
#[derive(Debug)]
pub struct BatchNormCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
    count: usize,
}

pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn bn_check<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(usize, usize), NumericsError> {
    if input.shape().len() != 4 {
        return Err(NumericsError::shape(
            "batchnorm",
            format!("expected NHWC input, got {:?}", input.shape()),
        ));
    }
    let c = input.shape()[3];
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(NumericsError::shape(
            "batchnorm",
            format!(
                "gamma {:?} / beta {:?} must both be [{c}]",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let count = input.shape()[0] * input.shape()[1] * input.shape()[2];
    Ok((c, count))
}

/// Batch normalization over the channel axis of an NHWC tensor.
///
/// Train mode normalizes with batch statistics and folds them into the
/// running stats as `running <- momentum * running + (1 - momentum) * batch`;
/// infer mode normalizes with the running stats. Returns the cache needed
/// by [`batchnorm_backward`] in train mode.
pub fn batchnorm_forward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &mut BatchNormState<T>,
    eps: f64,
    momentum: f64,
    mode: BnMode,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>), NumericsError> {
    let (c, count) = bn_check(input, gamma, beta)?;
    let (n, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let eps_t = T::from_config(eps);
    let x = input.data();

    let (mean, var, cache_stats) = match mode {
        BnMode::Train => {
            if n < 2 {
                return Err(NumericsError::ZeroBatch(n));
            }
            let cnt = T::from_usize(count).unwrap();
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for row in x.chunks_exact(c) {
                for (ch, &v) in row.iter().enumerate() {
                    mean[ch] += v;
                }
            }
            for m in mean.iter_mut() {
                *m /= cnt;
            }
            for row in x.chunks_exact(c) {
                for (ch, &v) in row.iter().enumerate() {
                    let d = v - mean[ch];
                    var[ch] += d * d;
                }
            }
            for v in var.iter_mut() {
                *v /= cnt;
            }
            let mom = T::from_config(momentum);
            let one_m = T::one() - mom;
            for ch in 0..c {
                let rm = state.running_mean.data_mut();
                rm[ch] = mom * rm[ch] + one_m * mean[ch];
                let rv = state.running_var.data_mut();
                rv[ch] = mom * rv[ch] + one_m * var[ch];
            }
            (mean, var, true)
        }
        BnMode::Infer => (
            state.running_mean.data().to_vec(),
            state.running_var.data().to_vec(),
            false,
        ),
    };

    let inv_std: Vec<T> = var.iter().map(|&v| (v + eps_t).sqrt().recip()).collect();
    let mut out = Tensor::zeros(&[n, h, w, c]);
    let mut x_hat = Tensor::zeros(&[n, h, w, c]);
    {
        let o = out.data_mut();
        let xh = x_hat.data_mut();
        let ga = gamma.data();
        let be = beta.data();
        for (i, &v) in x.iter().enumerate() {
            let ch = i % c;
            let norm = (v - mean[ch]) * inv_std[ch];
            xh[i] = norm;
            o[i] = ga[ch] * norm + be[ch];
        }
    }
    out.check_finite("batchnorm")?;
    let cache = cache_stats.then_some(BatchNormCache {
        x_hat,
        inv_std,
        count,
    });
    Ok((out, cache))
}

/// Standard batch-norm gradient from a train-mode forward cache.
pub fn batchnorm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>, NumericsError> {
    if grad_out.shape() != cache.x_hat.shape() {
        return Err(NumericsError::shape(
            "batchnorm_backward",
            format!(
                "grad shape {:?} != cached shape {:?}",
                grad_out.shape(),
                cache.x_hat.shape()
            ),
        ));
    }
    let c = gamma.shape()[0];
    let cnt = T::from_usize(cache.count).unwrap();
    let g = grad_out.data();
    let xh = cache.x_hat.data();
    let ga = gamma.data();

    let mut d_gamma = vec![T::zero(); c];
    let mut d_beta = vec![T::zero(); c];
    // Per-channel sums of dx_hat and dx_hat * x_hat.
    let mut sum_dxh = vec![T::zero(); c];
    let mut sum_dxh_xh = vec![T::zero(); c];
    for (i, &gv) in g.iter().enumerate() {
        let ch = i % c;
        d_beta[ch] += gv;
        d_gamma[ch] += gv * xh[i];
        let dxh = gv * ga[ch];
        sum_dxh[ch] += dxh;
        sum_dxh_xh[ch] += dxh * xh[i];
    }

    let mut d_input = Tensor::zeros(cache.x_hat.shape());
    {
        let dx = d_input.data_mut();
        for (i, &gv) in g.iter().enumerate() {
            let ch = i % c;
            let dxh = gv * ga[ch];
            dx[i] = cache.inv_std[ch] / cnt
                * (cnt * dxh - sum_dxh[ch] - xh[i] * sum_dxh_xh[ch]);
        }
    }
    Ok(BatchNormGrads {
        input: d_input,
        gamma: Tensor::from_vec(&[c], d_gamma)?,
        beta: Tensor::from_vec(&[c], d_beta)?,
    })
}

fn fc_check<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize), NumericsError> {
    if input.shape().len() != 2 || weights.shape().len() != 2 {
        return Err(NumericsError::shape(
            "fully_connected",
            format!(
                "expected [n,din] input and [din,dout] weights, got {:?} and {:?}",
                input.shape(),
                weights.shape()
            ),
        ));
    }
    let (n, din) = (input.shape()[0], input.shape()[1]);
    let dout = weights.shape()[1];
    if weights.shape()[0] != din {
        return Err(NumericsError::shape(
            "fully_connected",
            format!("input dim {} != weight din {}", din, weights.shape()[0]),
        ));
    }
    if bias.shape() != [dout] {
        return Err(NumericsError::shape(
            "fully_connected",
            format!("bias shape {:?} != [{dout}]", bias.shape()),
        ));
    }
    Ok((n, din, dout))
}

/// Affine map `out = input * weights + bias`.
pub fn fully_connected_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NumericsError> {
    let (n, din, dout) = fc_check(input, weights, bias)?;
    let mut out = Tensor::zeros(&[n, dout]);
    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let o = out.data_mut();
    for ni in 0..n {
        let orow = &mut o[ni * dout..][..dout];
        orow.copy_from_slice(b);
        let xrow = &x[ni * din..][..din];
        for (di, &xv) in xrow.iter().enumerate() {
            let wrow = &wt[di * dout..][..dout];
            for (co, &wv) in wrow.iter().enumerate() {
                orow[co] += xv * wv;
            }
        }
    }
    out.check_finite("fully_connected")?;
    Ok(out)
}

pub struct FcGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn fully_connected_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<FcGrads<T>, NumericsError> {
    let (n, din, dout) = (
        input.shape()[0],
        input.shape()[1],
        weights.shape()[1],
    );
    if grad_out.shape() != [n, dout] {
        return Err(NumericsError::shape(
            "fully_connected_backward",
            format!("grad shape {:?} != [{n}, {dout}]", grad_out.shape()),
        ));
    }
    let mut d_input = Tensor::zeros(input.shape());
    let mut d_weights = Tensor::zeros(weights.shape());
    let mut d_bias = Tensor::zeros(&[dout]);
    let x = input.data();
    let wt = weights.data();
    let g = grad_out.data();
    let dx = d_input.data_mut();
    let dw = d_weights.data_mut();
    let db = d_bias.data_mut();
    for ni in 0..n {
        let grow = &g[ni * dout..][..dout];
        for (co, &gv) in grow.iter().enumerate() {
            db[co] += gv;
        }
        let xrow = &x[ni * din..][..din];
        for di in 0..din {
            let wrow = &wt[di * dout..][..dout];
            let dwrow = &mut dw[di * dout..][..dout];
            let mut acc = T::zero();
            for (co, &gv) in grow.iter().enumerate() {
                acc += wrow[co] * gv;
                dwrow[co] += xrow[di] * gv;
            }
            dx[ni * din + di] = acc;
        }
    }
    Ok(FcGrads {
        input: d_input,
        weights: d_weights,
        bias: d_bias,
    })
}

/// Elementwise `max(0, x)`.
pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Gradient gate `x > 0`; the gradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NumericsError> {
    if input.shape() != grad_out.shape() {
        return Err(NumericsError::shape(
            "relu_backward",
            format!("grad shape {:?} != input {:?}", grad_out.shape(), input.shape()),
        ));
    }
    let mut out = Tensor::zeros(input.shape());
    let x = input.data();
    let g = grad_out.data();
    let o = out.data_mut();
    for i in 0..x.len() {
        o[i] = if x[i] > T::zero() { g[i] } else { T::zero() };
    }
    Ok(out)
}

/// Mean over the spatial dims: `[n,h,w,c] -> [n,c]`.
pub fn global_avg_pool_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    if input.shape().len() != 4 {
        return Err(NumericsError::shape(
            "global_avg_pool",
            format!("expected NHWC input, got {:?}", input.shape()),
        ));
    }
    let (n, h, w, c) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let area = T::from_usize(h * w).unwrap();
    let mut out = Tensor::zeros(&[n, c]);
    let x = input.data();
    let o = out.data_mut();
    for ni in 0..n {
        let orow = &mut o[ni * c..][..c];
        for row in x[ni * h * w * c..(ni + 1) * h * w * c].chunks_exact(c) {
            for (ch, &v) in row.iter().enumerate() {
                orow[ch] += v;
            }
        }
        for v in orow.iter_mut() {
            *v /= area;
        }
    }
    Ok(out)
}

pub fn global_avg_pool_backward<T: Scalar>(
    input_shape: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NumericsError> {
    let (n, h, w, c) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
    if grad_out.shape() != [n, c] {
        return Err(NumericsError::shape(
            "global_avg_pool_backward",
            format!("grad shape {:?} != [{n}, {c}]", grad_out.shape()),
        ));
    }
    let area = T::from_usize(h * w).unwrap();
    let mut out = Tensor::zeros(input_shape);
    let g = grad_out.data();
    let o = out.data_mut();
    for ni in 0..n {
        let grow = &g[ni * c..][..c];
        for row in o[ni * h * w * c..(ni + 1) * h * w * c].chunks_exact_mut(c) {
            for (ch, v) in row.iter_mut().enumerate() {
                *v = grow[ch] / area;
            }
        }
    }
    Ok(out)
}

/// Mean squared error over all components of equally shaped tensors.
pub fn mse_loss_forward<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
) -> Result<T, NumericsError> {
    if pred.shape() != target.shape() {
        return Err(NumericsError::shape(
            "mse_loss",
            format!("pred {:?} != target {:?}", pred.shape(), target.shape()),
        ));
    }
    if pred.is_empty() {
        return Err(NumericsError::EmptyInput("mse_loss"));
    }
    let total = T::from_usize(pred.len()).unwrap();
    let mut acc = T::zero();
    for (p, t) in pred.data().iter().zip(target.data()) {
        let d = *p - *t;
        acc += d * d;
    }
    let loss = acc / total;
    if !loss.is_finite() {
        return Err(NumericsError::NumericFault {
            op: "mse_loss".to_string(),
            detail: format!("loss is {loss}"),
        });
    }
    Ok(loss)
}

/// `d loss / d pred = 2 (pred - target) / N` where `N` counts all components.
pub fn mse_loss_backward<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
) -> Result<Tensor<T>, NumericsError> {
    if pred.shape() != target.shape() {
        return Err(NumericsError::shape(
            "mse_loss_backward",
            format!("pred {:?} != target {:?}", pred.shape(), target.shape()),
        ));
    }
    let total = T::from_usize(pred.len()).unwrap();
    let two = T::from_config(2.0);
    let mut out = Tensor::zeros(pred.shape());
    let o = out.data_mut();
    for (i, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        o[i] = two * (*p - *t) / total;
    }
    Ok(out)
}
