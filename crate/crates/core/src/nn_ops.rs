//! Forward and backward kernels.
//!
//! Layout conventions: a sentence matrix is `channels × length` row-major, so
//! row `i` is one channel over time. Filter banks are `n × c × w`. Conv and
//! batch-norm outputs are `filters × positions`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::charvocab::EncodedSentence;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

// ---------------------------------------------------------------------------
// GEMM

/// `c = a · b + beta · c` for row-major or transposed views described by strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= span(m, k, rsa, csa));
    assert!(b.len() >= span(k, n, rsb, csb));
    assert_eq!(c.len(), m * n);
    // SAFETY: bounds asserted above; c is a dense m×n row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
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
            n as isize,
            1,
        );
    }
}

// ---------------------------------------------------------------------------
// Embedding

/// Gathers one embedding column per character: `W (d × |C|)` → `d × L`.
pub fn embedding_lookup(w: &Tensor, s: &EncodedSentence) -> Result<Tensor> {
    let (d, vocab) = w.dims2();
    let len = s.indices.len();
    if let Some(&bad) = s.indices.iter().find(|&&i| i >= vocab) {
        return Err(Error::Contract(format!(
            "character index {bad} outside embedding table of {vocab} columns"
        )));
    }
    let wd = w.data();
    let mut out = vec![0.0; d * len];
    for r in 0..d {
        let wrow = &wd[r * vocab..(r + 1) * vocab];
        let orow = &mut out[r * len..(r + 1) * len];
        for (o, &idx) in orow.iter_mut().zip(&s.indices) {
            *o = wrow[idx];
        }
    }
    Tensor::from_vec(&[d, len], out)
}

/// Scatter-adds `grad_out (d × L)` into the columns of `grad_w` selected by `s`.
pub fn embedding_backward(grad_out: &Tensor, s: &EncodedSentence, grad_w: &mut Tensor) {
    let (d, len) = grad_out.dims2();
    let (gd, vocab) = grad_w.dims2();
    assert_eq!(d, gd);
    assert_eq!(len, s.indices.len());
    let g = grad_out.data();
    let gw = grad_w.data_mut();
    for r in 0..d {
        let grow = &g[r * len..(r + 1) * len];
        let wrow = &mut gw[r * vocab..(r + 1) * vocab];
        for (&v, &idx) in grow.iter().zip(&s.indices) {
            wrow[idx] += v;
        }
    }
}

// ---------------------------------------------------------------------------
// Convolution

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMode {
    /// Windows fully inside the input: `L − w + 1` outputs.
    Narrow,
    /// Zero-padded on both sides: `L + w − 1` outputs.
    Wide,
}

impl ConvMode {
    pub fn output_len(self, len: usize, width: usize) -> Result<usize> {
        match self {
            ConvMode::Narrow if len < width => Err(Error::Shape(format!(
                "narrow convolution of width {width} needs at least {width} positions, got {len}"
            ))),
            ConvMode::Narrow => Ok(len - width + 1),
            ConvMode::Wide => Ok(len + width - 1),
        }
    }

    fn offset(self, width: usize) -> isize {
        match self {
            ConvMode::Narrow => 0,
            ConvMode::Wide => width as isize - 1,
        }
    }
}

/// Filter bank, biases and batch-norm state of one convolution block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlockParams {
    /// `n × c × w`
    pub filters: Tensor,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl ConvBlockParams {
    /// Zero filters, zero bias, unit scale, zero shift, unit running variance.
    pub fn new(n_filters: usize, in_channels: usize, width: usize) -> Self {
        Self {
            filters: Tensor::zeros(&[n_filters, in_channels, width]),
            bias: vec![0.0; n_filters],
            gamma: vec![1.0; n_filters],
            beta: vec![0.0; n_filters],
            running_mean: vec![0.0; n_filters],
            running_var: vec![1.0; n_filters],
        }
    }

    pub fn n_filters(&self) -> usize {
        self.filters.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.filters.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.filters.shape()[2]
    }
}

/// Unrolls windows into a `(c·w) × L′` matrix; row `ch·w + k`, column `j`
/// holds `S[ch, j + k − offset]` (zero outside the input).
fn im2col(
    input: &[f64],
    c: usize,
    len: usize,
    w: usize,
    out_len: usize,
    offset: isize,
) -> Vec<f64> {
    let mut cols = vec![0.0; c * w * out_len];
    for ch in 0..c {
        let srow = &input[ch * len..(ch + 1) * len];
        for k in 0..w {
            let crow = &mut cols[(ch * w + k) * out_len..(ch * w + k + 1) * out_len];
            let shift = k as isize - offset;
            // j + shift must lie in [0, len)
            let j_lo = (-shift).max(0) as usize;
            let j_hi = ((len as isize - shift).min(out_len as isize)).max(0) as usize;
            if j_lo < j_hi {
                let s_lo = (j_lo as isize + shift) as usize;
                crow[j_lo..j_hi].copy_from_slice(&srow[s_lo..s_lo + (j_hi - j_lo)]);
            }
        }
    }
    cols
}

fn col2im_add(
    cols: &[f64],
    c: usize,
    len: usize,
    w: usize,
    out_len: usize,
    offset: isize,
    grad: &mut [f64],
) {
    for ch in 0..c {
        let grow = &mut grad[ch * len..(ch + 1) * len];
        for k in 0..w {
            let crow = &cols[(ch * w + k) * out_len..(ch * w + k + 1) * out_len];
            let shift = k as isize - offset;
            let j_lo = (-shift).max(0) as usize;
            let j_hi = ((len as isize - shift).min(out_len as isize)).max(0) as usize;
            if j_lo < j_hi {
                let s_lo = (j_lo as isize + shift) as usize;
                for (g, &v) in grow[s_lo..s_lo + (j_hi - j_lo)]
                    .iter_mut()
                    .zip(&crow[j_lo..j_hi])
                {
                    *g += v;
                }
            }
        }
    }
}

fn check_conv_input(block: &ConvBlockParams, input: &Tensor) -> Result<(usize, usize)> {
    if input.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "convolution input must be channels × length, got {:?}",
            input.shape()
        )));
    }
    let (c, len) = input.dims2();
    if c != block.in_channels() {
        return Err(Error::Shape(format!(
            "convolution expects {} input channels, got {c}",
            block.in_channels()
        )));
    }
    Ok((c, len))
}

/// `t[i, j] = F_i · window_j(S) + b_i`.
pub fn conv1d(block: &ConvBlockParams, input: &Tensor, mode: ConvMode) -> Result<Tensor> {
    let (c, len) = check_conv_input(block, input)?;
    let n = block.n_filters();
    let w = block.width();
    let out_len = mode.output_len(len, w)?;
    let cols = im2col(input.data(), c, len, w, out_len, mode.offset(w));
    let mut out = vec![0.0; n * out_len];
    for (row, &b) in out.chunks_mut(out_len).zip(&block.bias) {
        row.fill(b);
    }
    gemm(
        n,
        c * w,
        out_len,
        block.filters.data(),
        (c * w, 1),
        &cols,
        (out_len, 1),
        1.0,
        &mut out,
    );
    Tensor::from_vec(&[n, out_len], out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub filters: Tensor,
    pub bias: Vec<f64>,
    pub input: Tensor,
}

pub fn conv1d_backward(
    block: &ConvBlockParams,
    input: &Tensor,
    grad_out: &Tensor,
    mode: ConvMode,
) -> Result<ConvGrads> {
    let (c, len) = check_conv_input(block, input)?;
    let n = block.n_filters();
    let w = block.width();
    let out_len = mode.output_len(len, w)?;
    if grad_out.shape() != [n, out_len] {
        return Err(Error::Shape(format!(
            "convolution output gradient must be {:?}, got {:?}",
            [n, out_len],
            grad_out.shape()
        )));
    }
    let offset = mode.offset(w);
    let cols = im2col(input.data(), c, len, w, out_len, offset);
    let g = grad_out.data();

    // dF = dT · colsᵀ
    let mut d_filters = vec![0.0; n * c * w];
    gemm(
        n,
        out_len,
        c * w,
        g,
        (out_len, 1),
        &cols,
        (1, out_len),
        0.0,
        &mut d_filters,
    );

    let d_bias = g.chunks(out_len).map(|row| row.iter().sum()).collect();

    // dcols = Fᵀ · dT
    let mut d_cols = vec![0.0; c * w * out_len];
    gemm(
        c * w,
        n,
        out_len,
        block.filters.data(),
        (1, c * w),
        g,
        (out_len, 1),
        0.0,
        &mut d_cols,
    );
    let mut d_input = vec![0.0; c * len];
    col2im_add(&d_cols, c, len, w, out_len, offset, &mut d_input);

    Ok(ConvGrads {
        filters: Tensor::from_vec(&[n, c, w], d_filters)?,
        bias: d_bias,
        input: Tensor::from_vec(&[c, len], d_input)?,
    })
}

// ---------------------------------------------------------------------------
// Batch normalization

/// Per-filter statistics of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Population (biased) variance.
    pub var: Vec<f64>,
    /// Values pooled per filter (batch items × positions).
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub x_hat: Vec<Tensor>,
    pub inv_std: Vec<f64>,
    pub stats: BatchStats,
}

fn check_bn_batch(xs: &[Tensor], n: usize) -> Result<usize> {
    let mut count = 0;
    for x in xs {
        if x.shape().len() != 2 || x.shape()[0] != n {
            return Err(Error::Shape(format!(
                "batch norm expects {n} × positions, got {:?}",
                x.shape()
            )));
        }
        count += x.shape()[1];
    }
    Ok(count)
}

/// Batch statistics pooled over every item and position, per filter.
pub fn batch_stats(xs: &[Tensor], n: usize) -> Result<BatchStats> {
    let count = check_bn_batch(xs, n)?;
    if count < 2 {
        return Err(Error::Contract(format!(
            "batch norm in train mode needs at least 2 values per filter, got {count}"
        )));
    }
    let mut mean = vec![0.0; n];
    for x in xs {
        for (m, row) in mean.iter_mut().zip(x.data().chunks(x.shape()[1])) {
            *m += row.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; n];
    for x in xs {
        for ((v, row), &m) in var.iter_mut().zip(x.data().chunks(x.shape()[1])).zip(&mean) {
            *v += row.iter().map(|&t| (t - m) * (t - m)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= count as f64);
    Ok(BatchStats { mean, var, count })
}

fn normalize(
    xs: &[Tensor],
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<Tensor>, Vec<Tensor>) {
    let mut ys = Vec::with_capacity(xs.len());
    let mut hats = Vec::with_capacity(xs.len());
    for x in xs {
        let len = x.shape()[1];
        let mut hat = x.clone();
        let mut y = x.clone();
        for i in 0..mean.len() {
            let hrow = &mut hat.data_mut()[i * len..(i + 1) * len];
            for h in hrow.iter_mut() {
                *h = (*h - mean[i]) * inv_std[i];
            }
            let yrow = &mut y.data_mut()[i * len..(i + 1) * len];
            for (yv, &h) in yrow.iter_mut().zip(&hat.data()[i * len..(i + 1) * len]) {
                *yv = gamma[i] * h + beta[i];
            }
        }
        ys.push(y);
        hats.push(hat);
    }
    (ys, hats)
}

/// Train-mode batch norm: normalize with batch mean and population variance
/// (`eps` inside the square root), then scale by γ and shift by β.
pub fn batchnorm_train(
    xs: &[Tensor],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Vec<Tensor>, BnCache)> {
    let n = gamma.len();
    let stats = batch_stats(xs, n)?;
    let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let (ys, x_hat) = normalize(xs, &stats.mean, &inv_std, gamma, beta);
    Ok((
        ys,
        BnCache {
            x_hat,
            inv_std,
            stats,
        },
    ))
}

/// Inference-mode batch norm with stored statistics.
pub fn batchnorm_infer(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
) -> Result<Tensor> {
    check_bn_batch(std::slice::from_ref(x), gamma.len())?;
    let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let (mut ys, _) = normalize(std::slice::from_ref(x), running_mean, &inv_std, gamma, beta);
    Ok(ys.pop().expect("one output"))
}

/// Mode-dispatching entry point. Train mode also returns the cache needed by
/// [`batchnorm_backward`].
pub fn batchnorm(
    xs: &[Tensor],
    block: &ConvBlockParams,
    mode: Mode,
    eps: f64,
) -> Result<(Vec<Tensor>, Option<BnCache>)> {
    match mode {
        Mode::Train => {
            let (ys, cache) = batchnorm_train(xs, &block.gamma, &block.beta, eps)?;
            Ok((ys, Some(cache)))
        }
        Mode::Infer => {
            let ys = xs
                .iter()
                .map(|x| {
                    batchnorm_infer(
                        x,
                        &block.gamma,
                        &block.beta,
                        &block.running_mean,
                        &block.running_var,
                        eps,
                    )
                })
                .collect::<Result<_>>()?;
            Ok((ys, None))
        }
    }
}

/// How the backward pass treats the batch statistics.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BnBackward {
    /// Exact gradient through mean and variance.
    #[default]
    Full,
    /// Treats mean and variance as constants. Wrong in train mode; used to
    /// check that the gradient harness notices.
    StatsDetached,
}

pub struct BnGrads {
    pub input: Vec<Tensor>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn batchnorm_backward(grad: &[Tensor], cache: &BnCache, gamma: &[f64]) -> BnGrads {
    batchnorm_backward_with(grad, cache, gamma, BnBackward::Full)
}

#[doc(hidden)]
pub fn batchnorm_backward_with(
    grad: &[Tensor],
    cache: &BnCache,
    gamma: &[f64],
    variant: BnBackward,
) -> BnGrads {
    let n = gamma.len();
    let count = cache.stats.count as f64;
    let mut d_gamma = vec![0.0; n];
    let mut d_beta = vec![0.0; n];
    for (g, h) in grad.iter().zip(&cache.x_hat) {
        let len = g.shape()[1];
        for i in 0..n {
            let grow = &g.data()[i * len..(i + 1) * len];
            let hrow = &h.data()[i * len..(i + 1) * len];
            d_beta[i] += grow.iter().sum::<f64>();
            d_gamma[i] += grow.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    let mut inputs = Vec::with_capacity(grad.len());
    for (g, h) in grad.iter().zip(&cache.x_hat) {
        let len = g.shape()[1];
        let mut dx = g.clone();
        for i in 0..n {
            let scale = gamma[i] * cache.inv_std[i];
            let hrow = &h.data()[i * len..(i + 1) * len];
            let drow = &mut dx.data_mut()[i * len..(i + 1) * len];
            match variant {
                BnBackward::Full => {
                    let mean_dy = d_beta[i] / count;
                    let mean_dy_xhat = d_gamma[i] / count;
                    for (d, &hv) in drow.iter_mut().zip(hrow) {
                        *d = scale * (*d - mean_dy - hv * mean_dy_xhat);
                    }
                }
                BnBackward::StatsDetached => {
                    drow.iter_mut().for_each(|d| *d *= scale);
                }
            }
        }
        inputs.push(dx);
    }
    BnGrads {
        input: inputs,
        gamma: d_gamma,
        beta: d_beta,
    }
}

/// Exponential moving average update of the stored statistics. The variance
/// is stored unbiased (`var · N/(N−1)`).
pub fn update_running_stats(block: &mut ConvBlockParams, stats: &BatchStats, momentum: f64) {
    let correction = stats.count as f64 / (stats.count as f64 - 1.0);
    for i in 0..stats.mean.len() {
        block.running_mean[i] = (1.0 - momentum) * block.running_mean[i] + momentum * stats.mean[i];
        block.running_var[i] =
            (1.0 - momentum) * block.running_var[i] + momentum * stats.var[i] * correction;
    }
}

// ---------------------------------------------------------------------------
// Pooling

/// Max over time per filter. Ties resolve to the earliest position.
pub fn maxpool_time(t: &Tensor) -> Result<(Vec<f64>, Vec<usize>)> {
    if t.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "max pooling expects a matrix, got {:?}",
            t.shape()
        )));
    }
    let (n, len) = t.dims2();
    if len == 0 {
        return Err(Error::Shape("max pooling over zero positions".into()));
    }
    let mut values = Vec::with_capacity(n);
    let mut argmax = Vec::with_capacity(n);
    for row in t.data().chunks(len) {
        let mut best = 0;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        values.push(row[best]);
        argmax.push(best);
    }
    Ok((values, argmax))
}

pub fn maxpool_backward(grad: &[f64], argmax: &[usize], len: usize) -> Tensor {
    let n = grad.len();
    let mut out = vec![0.0; n * len];
    for (i, (&g, &j)) in grad.iter().zip(argmax).enumerate() {
        out[i * len + j] = g;
    }
    Tensor::from_vec(&[n, len], out).expect("shape")
}

// ---------------------------------------------------------------------------
// Dense layers and pointwise ops

/// `Wd · x + bd` with `Wd` of shape `out × in`.
pub fn dense(w: &Tensor, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let (out, inp) = w.dims2();
    if b.len() != out || x.len() != inp {
        return Err(Error::Shape(format!(
            "dense {out}×{inp} got bias {} and input {}",
            b.len(),
            x.len()
        )));
    }
    Ok(w.data()
        .chunks(inp)
        .zip(b)
        .map(|(row, &bias)| bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect())
}

pub struct DenseGrads {
    pub weight: Tensor,
    pub bias: Vec<f64>,
    pub input: Vec<f64>,
}

pub fn dense_backward(w: &Tensor, x: &[f64], grad_out: &[f64]) -> DenseGrads {
    let (out, inp) = w.dims2();
    assert_eq!(grad_out.len(), out);
    assert_eq!(x.len(), inp);
    let mut dw = Vec::with_capacity(out * inp);
    for &g in grad_out {
        dw.extend(x.iter().map(|&xv| g * xv));
    }
    let mut dx = vec![0.0; inp];
    for (row, &g) in w.data().chunks(inp).zip(grad_out) {
        for (d, &wv) in dx.iter_mut().zip(row) {
            *d += wv * g;
        }
    }
    DenseGrads {
        weight: Tensor::from_vec(&[out, inp], dw).expect("shape"),
        bias: grad_out.to_vec(),
        input: dx,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: &mut [f64]) {
        match self {
            Activation::Relu => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => x.iter_mut().for_each(|v| *v = v.tanh()),
        }
    }

    /// Multiplies `grad` in place by the derivative, given the activation output.
    pub fn backward(self, output: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Relu => {
                for (g, &y) in grad.iter_mut().zip(output) {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (g, &y) in grad.iter_mut().zip(output) {
                    *g *= 1.0 - y * y;
                }
            }
        }
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub fn relu_backward(output: &[f64], grad: &[f64]) -> Vec<f64> {
    let mut g = grad.to_vec();
    Activation::Relu.backward(output, &mut g);
    g
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient w.r.t. logits given softmax output `p` and `dL/dp`.
pub fn softmax_backward(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter()
        .zip(grad_p)
        .map(|(&pi, &gi)| pi * (gi - dot))
        .collect()
}

/// Inverted dropout. Returns the output and the per-coordinate multiplier
/// (`0` or `1/(1−rate)`; all ones in inference mode).
pub fn dropout<R: Rng + ?Sized>(
    x: &[f64],
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.to_vec(), vec![1.0; x.len()]));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let y = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
    Ok((y, mask))
}

pub fn dropout_backward(grad: &[f64], mask: &[f64]) -> Vec<f64> {
    grad.iter().zip(mask).map(|(g, m)| g * m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block_from(filters: Vec<f64>, shape: [usize; 3], bias: Vec<f64>) -> ConvBlockParams {
        let mut b = ConvBlockParams::new(shape[0], shape[1], shape[2]);
        b.filters = Tensor::from_vec(&shape, filters).unwrap();
        b.bias = bias;
        b
    }

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central differences of a scalar function over every coordinate of `x`.
    fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-5;
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let orig = probe[i];
                probe[i] = orig + h;
                let up = f(&probe);
                probe[i] = orig - h;
                let down = f(&probe);
                probe[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn assert_grad_close(analytic: &[f64], numeric: &[f64], tol: f64) {
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            let abs = (a - n).abs();
            assert!(
                rel < tol || abs < 1e-10,
                "coord {i}: analytic {a} numeric {n} rel {rel}"
            );
        }
    }

    /// Fixed random projection so every output coordinate contributes.
    fn weights_for(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv_examples() {
        let id = block_from(vec![1.0], [1, 1, 1], vec![0.0]);
        let s = Tensor::from_vec(&[1, 2], vec![3.0, -2.0]).unwrap();
        assert_eq!(
            conv1d(&id, &s, ConvMode::Narrow).unwrap().data(),
            &[3.0, -2.0]
        );

        let b = block_from(vec![1.0, 1.0], [1, 1, 2], vec![1.0]);
        let s = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            conv1d(&b, &s, ConvMode::Narrow).unwrap().data(),
            &[4.0, 6.0]
        );
        assert_eq!(
            conv1d(&b, &s, ConvMode::Wide).unwrap().data(),
            &[2.0, 4.0, 6.0, 4.0]
        );
    }

    #[test]
    fn narrow_conv_rejects_short_input() {
        let b = ConvBlockParams::new(2, 1, 4);
        let s = Tensor::zeros(&[1, 3]);
        assert!(matches!(
            conv1d(&b, &s, ConvMode::Narrow),
            Err(Error::Shape(_))
        ));
        assert_eq!(conv1d(&b, &s, ConvMode::Wide).unwrap().shape(), &[2, 6]);
    }

    #[test]
    fn wide_center_equals_narrow() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (n, c, w) = (
                rng.gen_range(1..4),
                rng.gen_range(1..4),
                rng.gen_range(1..5),
            );
            let len = rng.gen_range(w..w + 6);
            let mut b = ConvBlockParams::new(n, c, w);
            b.filters = random_tensor(&mut rng, &[n, c, w]);
            b.bias = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = random_tensor(&mut rng, &[c, len]);
            let narrow = conv1d(&b, &s, ConvMode::Narrow).unwrap();
            let wide = conv1d(&b, &s, ConvMode::Wide).unwrap();
            let nl = len - w + 1;
            let wl = len + w - 1;
            assert_eq!(narrow.shape(), &[n, nl]);
            assert_eq!(wide.shape(), &[n, wl]);
            for i in 0..n {
                for j in 0..nl {
                    assert!((narrow.at2(i, j) - wide.at2(i, j + w - 1)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mode in [ConvMode::Narrow, ConvMode::Wide] {
            let (n, c, w, len) = (3, 2, 3, 6);
            let mut b = ConvBlockParams::new(n, c, w);
            b.filters = random_tensor(&mut rng, &[n, c, w]);
            b.bias = vec![0.1, -0.2, 0.3];
            let s = random_tensor(&mut rng, &[c, len]);
            let out_len = mode.output_len(len, w).unwrap();
            let proj = weights_for(n * out_len, 5);
            let g_out = Tensor::from_vec(&[n, out_len], proj.clone()).unwrap();
            let grads = conv1d_backward(&b, &s, &g_out, mode).unwrap();

            let num_s = numeric_grad(s.data(), |x| {
                let t = Tensor::from_vec(&[c, len], x.to_vec()).unwrap();
                dot(conv1d(&b, &t, mode).unwrap().data(), &proj)
            });
            assert_grad_close(grads.input.data(), &num_s, 1e-6);

            let num_f = numeric_grad(b.filters.data(), |f| {
                let mut bb = b.clone();
                bb.filters = Tensor::from_vec(&[n, c, w], f.to_vec()).unwrap();
                dot(conv1d(&bb, &s, mode).unwrap().data(), &proj)
            });
            assert_grad_close(grads.filters.data(), &num_f, 1e-6);

            let num_b = numeric_grad(&b.bias, |bias| {
                let mut bb = b.clone();
                bb.bias = bias.to_vec();
                dot(conv1d(&bb, &s, mode).unwrap().data(), &proj)
            });
            assert_grad_close(&grads.bias, &num_b, 1e-6);
        }
    }

    #[test]
    fn embedding_lookup_identity_and_repeated_backward() {
        let vocab = 4;
        let mut eye = vec![0.0; vocab * vocab];
        for i in 0..vocab {
            eye[i * vocab + i] = 1.0;
        }
        let w = Tensor::from_vec(&[vocab, vocab], eye).unwrap();
        let s = EncodedSentence {
            indices: vec![2, 0],
            true_len: 2,
        };
        let out = embedding_lookup(&w, &s).unwrap();
        // columns e2, e0
        assert_eq!(out.data(), &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);

        let s = EncodedSentence {
            indices: vec![1, 1],
            true_len: 2,
        };
        let g = Tensor::from_vec(&[vocab, 2], (1..=8).map(f64::from).collect()).unwrap();
        let mut gw = Tensor::zeros(&[vocab, vocab]);
        embedding_backward(&g, &s, &mut gw);
        for r in 0..vocab {
            assert_eq!(gw.at2(r, 1), g.at2(r, 0) + g.at2(r, 1));
            assert_eq!(gw.at2(r, 0), 0.0);
        }

        let bad = EncodedSentence {
            indices: vec![4],
            true_len: 1,
        };
        assert!(matches!(
            embedding_lookup(&w, &bad),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn embedding_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (d, vocab, len) = (3, 6, 7);
        let w = random_tensor(&mut rng, &[d, vocab]);
        let s = EncodedSentence {
            indices: (0..len).map(|_| rng.gen_range(0..vocab)).collect(),
            true_len: len,
        };
        let proj = weights_for(d * len, 9);
        let mut gw = Tensor::zeros(&[d, vocab]);
        embedding_backward(
            &Tensor::from_vec(&[d, len], proj.clone()).unwrap(),
            &s,
            &mut gw,
        );
        let num = numeric_grad(w.data(), |x| {
            let ww = Tensor::from_vec(&[d, vocab], x.to_vec()).unwrap();
            dot(embedding_lookup(&ww, &s).unwrap().data(), &proj)
        });
        assert_grad_close(gw.data(), &num, 1e-6);
    }

    #[test]
    fn batchnorm_examples() {
        let x = Tensor::from_vec(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let (y, cache) = batchnorm_train(std::slice::from_ref(&x), &[1.0], &[0.0], 0.0).unwrap();
        let expect = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in y[0].data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((cache.stats.var[0] - 2.0 / 3.0).abs() < 1e-15);

        let (y, _) = batchnorm_train(std::slice::from_ref(&x), &[0.0], &[0.7], 1e-5).unwrap();
        assert!(y[0].data().iter().all(|&v| v == 0.7));

        let c = Tensor::from_vec(&[1, 3], vec![5.0; 3]).unwrap();
        let (y, _) = batchnorm_train(std::slice::from_ref(&c), &[2.0], &[-0.3], 1e-5).unwrap();
        assert!(y[0].data().iter().all(|&v| v == -0.3));
    }

    #[test]
    fn batchnorm_needs_two_values() {
        let x = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        assert!(matches!(
            batchnorm_train(std::slice::from_ref(&x), &[1.0], &[0.0], 1e-5),
            Err(Error::Contract(_))
        ));
        // two single-position items make a population of 2
        let xs = vec![x.clone(), Tensor::from_vec(&[1, 1], vec![3.0]).unwrap()];
        assert!(batchnorm_train(&xs, &[1.0], &[0.0], 1e-5).is_ok());
    }

    #[test]
    fn batchnorm_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Tensor> = (0..4)
            .map(|i| random_tensor(&mut rng, &[3, 5 + i]))
            .collect();
        let (ys, _) = batchnorm_train(&xs, &[1.0; 3], &[0.0; 3], 1e-12).unwrap();
        let stats = batch_stats(&ys, 3).unwrap();
        for i in 0..3 {
            assert!(stats.mean[i].abs() < 1e-10);
            assert!((stats.var[i] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn batchnorm_coupled_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, lens) = (2, [3usize, 4, 2]);
        let xs: Vec<Tensor> = lens
            .iter()
            .map(|&l| random_tensor(&mut rng, &[n, l]))
            .collect();
        let gamma = vec![1.3, -0.4];
        let beta = vec![0.2, 0.5];
        let total: usize = lens.iter().sum::<usize>() * n;
        let proj = weights_for(total, 17);
        let pack = |ts: &[Tensor]| {
            ts.iter()
                .flat_map(|t| t.data().to_vec())
                .collect::<Vec<_>>()
        };
        let unpack = |flat: &[f64]| {
            let mut off = 0;
            lens.iter()
                .map(|&l| {
                    let t = Tensor::from_vec(&[n, l], flat[off..off + n * l].to_vec()).unwrap();
                    off += n * l;
                    t
                })
                .collect::<Vec<_>>()
        };
        let (_, cache) = batchnorm_train(&xs, &gamma, &beta, 1e-5).unwrap();
        let g = unpack(&proj);
        let grads = batchnorm_backward(&g, &cache, &gamma);

        let num_x = numeric_grad(&pack(&xs), |flat| {
            let (y, _) = batchnorm_train(&unpack(flat), &gamma, &beta, 1e-5).unwrap();
            dot(&pack(&y), &proj)
        });
        assert_grad_close(&pack(&grads.input), &num_x, 1e-6);

        let num_g = numeric_grad(&gamma, |gm| {
            let (y, _) = batchnorm_train(&xs, gm, &beta, 1e-5).unwrap();
            dot(&pack(&y), &proj)
        });
        assert_grad_close(&grads.gamma, &num_g, 1e-6);
        let num_b = numeric_grad(&beta, |bt| {
            let (y, _) = batchnorm_train(&xs, &gamma, bt, 1e-5).unwrap();
            dot(&pack(&y), &proj)
        });
        assert_grad_close(&grads.beta, &num_b, 1e-6);

        let detached = batchnorm_backward_with(&g, &cache, &gamma, BnBackward::StatsDetached);
        let worst = pack(&detached.input)
            .iter()
            .zip(&num_x)
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-8))
            .fold(0.0, f64::max);
        assert!(worst > 1e-2);
    }

    #[test]
    fn running_stats_use_unbiased_variance() {
        let mut b = ConvBlockParams::new(1, 1, 1);
        let stats = BatchStats {
            mean: vec![2.0],
            var: vec![2.0 / 3.0],
            count: 3,
        };
        update_running_stats(&mut b, &stats, 0.1);
        assert!((b.running_mean[0] - 0.2).abs() < 1e-15);
        assert!((b.running_var[0] - (0.9 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn batchnorm_infer_uses_running_stats() {
        let mut b = ConvBlockParams::new(1, 1, 1);
        b.running_mean = vec![1.0];
        b.running_var = vec![4.0];
        b.gamma = vec![2.0];
        b.beta = vec![1.0];
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 5.0]).unwrap();
        let (y, cache) = batchnorm(&[x], &b, Mode::Infer, 0.0).unwrap();
        assert!(cache.is_none());
        assert_eq!(y[0].data(), &[1.0, 5.0]);
    }

    #[test]
    fn maxpool_examples() {
        let t = Tensor::from_vec(&[1, 3], vec![1.0, 5.0, 2.0]).unwrap();
        assert_eq!(maxpool_time(&t).unwrap(), (vec![5.0], vec![1]));
        let t = Tensor::from_vec(&[1, 2], vec![2.0, 2.0]).unwrap();
        assert_eq!(maxpool_time(&t).unwrap(), (vec![2.0], vec![0]));
        let t = Tensor::from_vec(&[2, 3], vec![0.0, -1.0, 3.0, 4.0, 4.0, -2.0]).unwrap();
        let (v, a) = maxpool_time(&t).unwrap();
        assert_eq!(v, vec![3.0, 4.0]);
        let g = maxpool_backward(&[10.0, 20.0], &a, 3);
        assert_eq!(g.data(), &[0.0, 0.0, 10.0, 20.0, 0.0, 0.0]);
        assert!(maxpool_time(&Tensor::zeros(&[2, 0])).is_err());
    }

    #[test]
    fn pointwise_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        assert_eq!(relu(&[-1.0, 2.0]), vec![0.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = vec![1.0, -2.0, 3.0];
        let (y, m) = dropout(&x, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(y, x);
        assert_eq!(m, vec![1.0; 3]);
        let (y, _) = dropout(&x, 0.5, Mode::Infer, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let p = softmax(&[1.0, 2.0, -3.0]);
        let q = softmax(&[1001.0, 1002.0, 997.0]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let huge = softmax(&[1e300, -1e300]);
        assert_eq!(huge, vec![1.0, 0.0]);
    }

    #[test]
    fn dropout_scales_survivors_and_is_seeded() {
        let x = vec![1.0; 1000];
        let (y, mask) = dropout(&x, 0.25, Mode::Train, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let (y2, _) = dropout(&x, 0.25, Mode::Train, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(y, y2);
        let zeros = y.iter().filter(|&&v| v == 0.0).count();
        assert!((180..320).contains(&zeros));
        assert!(y.iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
        assert_eq!(
            dropout_backward(&[2.0; 1000], &mask)[..],
            y.iter().map(|v| 2.0 * v).collect::<Vec<_>>()[..]
        );
    }

    #[test]
    fn dense_softmax_activation_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = random_tensor(&mut rng, &[3, 4]);
        let b = vec![0.1, 0.2, -0.3];
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let proj = weights_for(3, 1);
        let grads = dense_backward(&w, &x, &proj);
        let num_x = numeric_grad(&x, |xx| dot(&dense(&w, &b, xx).unwrap(), &proj));
        assert_grad_close(&grads.input, &num_x, 1e-6);
        let num_w = numeric_grad(w.data(), |ww| {
            let t = Tensor::from_vec(&[3, 4], ww.to_vec()).unwrap();
            dot(&dense(&t, &b, &x).unwrap(), &proj)
        });
        assert_grad_close(grads.weight.data(), &num_w, 1e-6);
        let num_b = numeric_grad(&b, |bb| dot(&dense(&w, bb, &x).unwrap(), &proj));
        assert_grad_close(&grads.bias, &num_b, 1e-6);

        let z = vec![0.3, -1.2, 2.0];
        let p = softmax(&z);
        let dz = softmax_backward(&p, &proj);
        let num_z = numeric_grad(&z, |zz| dot(&softmax(zz), &proj));
        assert_grad_close(&dz, &num_z, 1e-6);

        for act in [Activation::Relu, Activation::Tanh] {
            let z = vec![0.3, -1.2, 2.0];
            let mut y = z.clone();
            act.apply(&mut y);
            let mut g = proj.clone();
            act.backward(&y, &mut g);
            let num = numeric_grad(&z, |zz| {
                let mut yy = zz.to_vec();
                act.apply(&mut yy);
                dot(&yy, &proj)
            });
            assert_grad_close(&g, &num, 1e-6);
        }
        assert!(dense(&w, &b, &x[..3]).is_err());
    }
}
