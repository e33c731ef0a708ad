//! Forward-only layer primitives on plain tensors. The row kernels here are
//! shared with the recorded [`Graph`](super::Graph) ops.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Default epsilon of [`layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Standard normal CDF, via `erfc` so the left tail keeps full precision.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `y = W x + b` with `W` stored as `[out, in]`.
pub fn fully_connected(layer: &str, x: &[f64], w: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    let (out, inp) = (w.rows(), w.cols());
    if w.shape().len() != 2 || x.len() != inp || b.len() != out {
        return Err(Error::dim(
            layer,
            format!(
                "input {} / weight {:?} / bias {}",
                x.len(),
                w.shape(),
                b.len()
            ),
        ));
    }
    Ok((0..out)
        .map(|o| {
            w.row(o)
                .iter()
                .zip(x)
                .fold(b[o], |acc, (wi, xi)| acc + wi * xi)
        })
        .collect())
}

/// Normalizes one row in place, writing `xhat` and returning `1/sqrt(var+eps)`.
pub(crate) fn layer_norm_row(x: &[f64], xhat: &mut [f64], eps: f64) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    for (h, v) in xhat.iter_mut().zip(x) {
        *h = (v - mean) * inv_std;
    }
    inv_std
}

/// Layer normalization with population variance.
pub fn layer_norm(x: &[f64], gain: &[f64], shift: &[f64], eps: f64) -> Result<Vec<f64>> {
    if x.is_empty() || gain.len() != x.len() || shift.len() != x.len() {
        return Err(Error::dim("layer_norm", "gain/shift must match input width"));
    }
    if eps <= 0.0 {
        return Err(Error::Config("layer_norm epsilon must be positive".into()));
    }
    let mut y = vec![0.0; x.len()];
    layer_norm_row(x, &mut y, eps);
    for ((v, g), s) in y.iter_mut().zip(gain).zip(shift) {
        *v = *v * g + s;
    }
    Ok(y)
}

pub(crate) fn softmax_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax_rows(m: &Tensor) -> Tensor {
    let mut out = m.clone();
    let c = out.cols();
    for row in out.data_mut().chunks_mut(c) {
        softmax_row(row);
    }
    out
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut c = vec![0.0; m * n];
    super::tensor::gemm(m, k, n, a.data(), false, b.data(), false, &mut c, 0.0);
    Tensor::matrix(m, n, c).expect("consistent extents")
}

/// Single-head scaled dot-product self-attention on one `d×d` grid:
/// `softmax((x Wq)(x Wk)^T / sqrt(d)) (x Wv) Wo`.
pub fn attention(x: &Tensor, wq: &Tensor, wk: &Tensor, wv: &Tensor, wo: &Tensor) -> Result<Tensor> {
    let d = x.cols();
    for (name, t) in [("x", x), ("wq", wq), ("wk", wk), ("wv", wv), ("wo", wo)] {
        if t.shape() != [d, d] {
            return Err(Error::dim(
                "attention",
                format!("{name} has shape {:?}, expected [{d}, {d}]", t.shape()),
            ));
        }
    }
    let q = matmul(x, wq);
    let k = matmul(x, wk);
    let v = matmul(x, wv);
    let mut scores = matmul(&q, &k.transpose());
    let scale = 1.0 / (d as f64).sqrt();
    scores.data_mut().iter_mut().for_each(|s| *s *= scale);
    let weights = softmax_rows(&scores);
    Ok(matmul(&matmul(&weights, &v), wo))
}

/// Kernel-3 cross-correlation with one zero pad on each side.
/// `x` is `[c_in, len]`, `kernels` is `[c_out, c_in * 3]`.
pub fn conv1d(x: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (c_in, len) = (x.rows(), x.cols());
    let c_out = kernels.rows();
    if kernels.cols() != c_in * 3 || bias.len() != c_out {
        return Err(Error::dim(
            "conv1d",
            format!(
                "input {:?}, kernels {:?}, bias {}",
                x.shape(),
                kernels.shape(),
                bias.len()
            ),
        ));
    }
    let mut y = vec![0.0; c_out * len];
    conv1d_row(x.data(), kernels.data(), bias, c_in, c_out, len, &mut y);
    Tensor::matrix(c_out, len, y)
}

pub(crate) fn conv1d_row(
    x: &[f64],
    w: &[f64],
    bias: &[f64],
    c_in: usize,
    c_out: usize,
    len: usize,
    y: &mut [f64],
) {
    for o in 0..c_out {
        let yo = &mut y[o * len..(o + 1) * len];
        yo.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..c_in {
            let xi = &x[i * len..(i + 1) * len];
            let wk = &w[(o * c_in + i) * 3..(o * c_in + i) * 3 + 3];
            for t in 0..len {
                let mut acc = wk[1] * xi[t];
                if t > 0 {
                    acc += wk[0] * xi[t - 1];
                }
                if t + 1 < len {
                    acc += wk[2] * xi[t + 1];
                }
                yo[t] += acc;
            }
        }
    }
}

/// Window 2, stride 2; a trailing odd element is dropped.
pub fn maxpool1d(x: &Tensor) -> Result<Tensor> {
    let (c, len) = (x.rows(), x.cols());
    if len < 2 {
        return Err(Error::dim("maxpool1d", format!("length {len} < 2")));
    }
    let out_len = len / 2;
    let mut y = Vec::with_capacity(c * out_len);
    for ch in 0..c {
        let row = x.row(ch);
        for t in 0..out_len {
            y.push(row[2 * t].max(row[2 * t + 1]));
        }
    }
    Tensor::matrix(c, out_len, y)
}
