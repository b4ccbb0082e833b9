//! Functional forward/backward kernels. Every reduction accumulates in f64
//! in a fixed order, so results do not depend on thread scheduling.

use rayon::prelude::*;

use super::tensor::{Real, Tensor};
use super::NetError;

fn shape_err(msg: String) -> NetError {
    NetError::Shape(msg)
}

/// Spatial geometry of a 2-D convolution.
#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn new<T: Real>(
        x: &Tensor<T>,
        weight: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<(usize, usize, Self), NetError> {
        let (n, c, h, w) = x.dims4()?;
        let (co, ci, kh, kw) = weight.dims4()?;
        if ci != c {
            return Err(shape_err(format!(
                "conv input has {c} channels, weight expects {ci}"
            )));
        }
        if stride == 0 {
            return Err(shape_err("conv stride must be >= 1".into()));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(shape_err(format!(
                "kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Ok((
            n,
            co,
            Self {
                c,
                h,
                w,
                kh,
                kw,
                stride,
                pad,
                ho,
                wo,
            },
        ))
    }

    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    /// Source pixel for output (oy, ox) and kernel tap (ky, kx), if inside.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        (y < self.h && x < self.w).then_some((y, x))
    }

    fn im2col<T: Real>(&self, sample: &[T]) -> Vec<f64> {
        let p = self.p();
        let mut cols = vec![0.0; self.k() * p];
        for ci in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((ci * self.kh + ky) * self.kw + kx) * p;
                    for oy in 0..self.ho {
                        for ox in 0..self.wo {
                            if let Some((y, x)) = self.source(oy, ox, ky, kx) {
                                cols[row + oy * self.wo + ox] =
                                    sample[(ci * self.h + y) * self.w + x].as_f64();
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], out: &mut [f64]) {
        let p = self.p();
        for ci in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((ci * self.kh + ky) * self.kw + kx) * p;
                    for oy in 0..self.ho {
                        for ox in 0..self.wo {
                            if let Some((y, x)) = self.source(oy, ox, ky, kx) {
                                out[(ci * self.h + y) * self.w + x] +=
                                    cols[row + oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of NCHW input with (Cout, Cin, kH, kW) weights.
pub fn conv2d<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, NetError> {
    let (n, co, g) = ConvGeom::new(x, weight, stride, pad)?;
    if let Some(b) = bias {
        if b.shape() != [co] {
            return Err(shape_err(format!(
                "conv bias shape {:?}, expected [{co}]",
                b.shape()
            )));
        }
    }
    let (k, p) = (g.k(), g.p());
    let w = weight.to_f64();
    let b: Vec<f64> = bias.map_or(vec![0.0; co], |b| b.to_f64());
    let in_len = g.c * g.h * g.w;
    let mut out = Vec::with_capacity(n * co * p);
    for s in 0..n {
        let cols = g.im2col(&x.data()[s * in_len..(s + 1) * in_len]);
        let mut acc = vec![0.0f64; co * p];
        acc.par_chunks_mut(p).enumerate().for_each(|(o, row)| {
            row.fill(b[o]);
            let wrow = &w[o * k..(o + 1) * k];
            for (kk, &wv) in wrow.iter().enumerate() {
                let crow = &cols[kk * p..(kk + 1) * p];
                for (r, &c) in row.iter_mut().zip(crow) {
                    *r += wv * c;
                }
            }
        });
        out.extend(acc.into_iter().map(T::of));
    }
    Tensor::from_vec(&[n, co, g.ho, g.wo], out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub struct ConvGrads {
    pub dx: Vec<f64>,
    pub dweight: Vec<f64>,
    pub dbias: Vec<f64>,
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
    dy: &Tensor<T>,
) -> Result<ConvGrads, NetError> {
    let (n, co, g) = ConvGeom::new(x, weight, stride, pad)?;
    if dy.shape() != [n, co, g.ho, g.wo] {
        return Err(shape_err(format!(
            "conv upstream gradient {:?}, expected {:?}",
            dy.shape(),
            [n, co, g.ho, g.wo]
        )));
    }
    let (k, p) = (g.k(), g.p());
    let w = weight.to_f64();
    let in_len = g.c * g.h * g.w;
    let mut dx = vec![0.0; n * in_len];
    let mut dweight = vec![0.0; co * k];
    let mut dbias = vec![0.0; co];
    for s in 0..n {
        let cols = g.im2col(&x.data()[s * in_len..(s + 1) * in_len]);
        let dys: Vec<f64> = dy.data()[s * co * p..(s + 1) * co * p]
            .iter()
            .map(|v| v.as_f64())
            .collect();
        for o in 0..co {
            dbias[o] += dys[o * p..(o + 1) * p].iter().sum::<f64>();
        }
        dweight.par_chunks_mut(k).enumerate().for_each(|(o, row)| {
            let drow = &dys[o * p..(o + 1) * p];
            for (kk, r) in row.iter_mut().enumerate() {
                let crow = &cols[kk * p..(kk + 1) * p];
                *r += drow.iter().zip(crow).map(|(a, b)| a * b).sum::<f64>();
            }
        });
        let mut dcols = vec![0.0; k * p];
        dcols.par_chunks_mut(p).enumerate().for_each(|(kk, row)| {
            for o in 0..co {
                let wv = w[o * k + kk];
                for (r, &d) in row.iter_mut().zip(&dys[o * p..(o + 1) * p]) {
                    *r += wv * d;
                }
            }
        });
        g.col2im(&dcols, &mut dx[s * in_len..(s + 1) * in_len]);
    }
    Ok(ConvGrads { dx, dweight, dbias })
}

/// Per-channel statistics saved by a training-mode batch norm pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
}

pub const BN_EPS: f64 = 1e-5;

fn check_affine<T: Real>(c: usize, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<(), NetError> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(shape_err(format!(
            "batch norm over {c} channels got gamma {:?}, beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(())
}

/// Normalizes with batch statistics over (N, H, W).
pub fn batchnorm2d_train<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(Tensor<T>, BatchNormCache), NetError> {
    let (n, c, h, w) = x.dims4()?;
    check_affine(c, gamma, beta)?;
    let hw = h * w;
    let m = (n * hw) as f64;
    let xd = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for b in 0..n {
            s += xd[(b * c + ch) * hw..(b * c + ch + 1) * hw]
                .iter()
                .map(|v| v.as_f64())
                .sum::<f64>();
        }
        mean[ch] = s / m;
        let mut q = 0.0;
        for b in 0..n {
            q += xd[(b * c + ch) * hw..(b * c + ch + 1) * hw]
                .iter()
                .map(|v| (v.as_f64() - mean[ch]).powi(2))
                .sum::<f64>();
        }
        var[ch] = q / m;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let (g, bt) = (gamma.to_f64(), beta.to_f64());
    let mut xhat = vec![0.0; xd.len()];
    let mut out = Vec::with_capacity(xd.len());
    for (i, v) in xd.iter().enumerate() {
        let ch = (i / hw) % c;
        let xh = (v.as_f64() - mean[ch]) * inv_std[ch];
        xhat[i] = xh;
        out.push(T::of(g[ch] * xh + bt[ch]));
    }
    Ok((
        Tensor::from_vec(x.shape(), out)?,
        BatchNormCache {
            xhat,
            inv_std,
            mean,
            var,
        },
    ))
}

/// Normalizes with fixed (running) statistics.
pub fn batchnorm2d_eval<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mean: &Tensor<T>,
    var: &Tensor<T>,
) -> Result<Tensor<T>, NetError> {
    let (_, c, h, w) = x.dims4()?;
    check_affine(c, gamma, beta)?;
    check_affine(c, mean, var)?;
    let hw = h * w;
    let (g, b, mu, vr) = (gamma.to_f64(), beta.to_f64(), mean.to_f64(), var.to_f64());
    let scale: Vec<f64> = (0..c).map(|ch| g[ch] / (vr[ch] + BN_EPS).sqrt()).collect();
    let out = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let ch = (i / hw) % c;
            T::of((v.as_f64() - mu[ch]) * scale[ch] + b[ch])
        })
        .collect();
    Tensor::from_vec(x.shape(), out)
}

/// Returns (dx, dgamma, dbeta) for a training-mode batch norm.
pub fn batchnorm2d_backward<T: Real>(
    dy: &Tensor<T>,
    gamma: &Tensor<T>,
    cache: &BatchNormCache,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), NetError> {
    let (n, c, h, w) = dy.dims4()?;
    if cache.xhat.len() != dy.len() || gamma.shape() != [c] {
        return Err(shape_err("batch norm backward shape mismatch".into()));
    }
    let hw = h * w;
    let m = (n * hw) as f64;
    let d = dy.data();
    let g = gamma.to_f64();
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (i, v) in d.iter().enumerate() {
        let ch = (i / hw) % c;
        dbeta[ch] += v.as_f64();
        dgamma[ch] += v.as_f64() * cache.xhat[i];
    }
    let dx = d
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let ch = (i / hw) % c;
            g[ch] * cache.inv_std[ch] / m
                * (m * v.as_f64() - dbeta[ch] - cache.xhat[i] * dgamma[ch])
        })
        .collect();
    Ok((dx, dgamma, dbeta))
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .map(|&v| if v > T::zero() { v } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Gates the upstream gradient by `x > 0`.
pub fn relu_backward<T: Real>(x: &Tensor<T>, dy: &[f64]) -> Vec<f64> {
    x.data()
        .iter()
        .zip(dy)
        .map(|(&v, &d)| if v > T::zero() { d } else { 0.0 })
        .collect()
}

/// Max pooling with -inf padding. Returns the output and, for each output
/// element, the flat input index it was taken from.
pub fn max_pool2d<T: Real>(
    x: &Tensor<T>,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Vec<usize>), NetError> {
    let (n, c, h, w) = x.dims4()?;
    if h + 2 * pad < kernel || w + 2 * pad < kernel || stride == 0 {
        return Err(shape_err(format!(
            "pool window {kernel} does not fit {h}x{w}"
        )));
    }
    let ho = (h + 2 * pad - kernel) / stride + 1;
    let wo = (w + 2 * pad - kernel) / stride + 1;
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for ky in 0..kernel {
                    for kx in 0..kernel {
                        let (Some(y), Some(xx)) = (
                            (oy * stride + ky).checked_sub(pad),
                            (ox * stride + kx).checked_sub(pad),
                        ) else {
                            continue;
                        };
                        if y >= h || xx >= w {
                            continue;
                        }
                        let idx = base + y * w + xx;
                        let v = xd[idx].as_f64();
                        if v > best || best_idx == usize::MAX {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                out.push(xd[best_idx]);
                arg.push(best_idx);
            }
        }
    }
    Ok((Tensor::from_vec(&[n, c, ho, wo], out)?, arg))
}

pub fn max_pool2d_backward(input_len: usize, argmax: &[usize], dy: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&i, &d) in argmax.iter().zip(dy) {
        dx[i] += d;
    }
    dx
}

/// Mean over the spatial dimensions: (N, C, H, W) -> (N, C).
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
    let (n, c, h, w) = x.dims4()?;
    let hw = h * w;
    let out = x
        .data()
        .chunks(hw)
        .map(|plane| T::of(plane.iter().map(|v| v.as_f64()).sum::<f64>() / hw as f64))
        .collect();
    Tensor::from_vec(&[n, c], out)
}

pub fn global_avg_pool_backward(dy: &[f64], hw: usize) -> Vec<f64> {
    dy.iter()
        .flat_map(|&d| std::iter::repeat_n(d / hw as f64, hw))
        .collect()
}

/// y = x W^T + b with x (N, I), W (O, I), b (O).
pub fn linear<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NetError> {
    let (n, i) = x.dims2()?;
    let (o, wi) = weight.dims2()?;
    if wi != i || bias.shape() != [o] {
        return Err(shape_err(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let (xd, wd, bd) = (x.to_f64(), weight.to_f64(), bias.to_f64());
    let mut out = Vec::with_capacity(n * o);
    for s in 0..n {
        let row = &xd[s * i..(s + 1) * i];
        for k in 0..o {
            let dot: f64 = row
                .iter()
                .zip(&wd[k * i..(k + 1) * i])
                .map(|(a, b)| a * b)
                .sum();
            out.push(T::of(dot + bd[k]));
        }
    }
    Tensor::from_vec(&[n, o], out)
}

/// Returns (dx, dweight, dbias).
pub fn linear_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), NetError> {
    let (n, i) = x.dims2()?;
    let (o, _) = weight.dims2()?;
    if dy.len() != n * o {
        return Err(shape_err("linear backward shape mismatch".into()));
    }
    let (xd, wd) = (x.to_f64(), weight.to_f64());
    let mut dx = vec![0.0; n * i];
    let mut dw = vec![0.0; o * i];
    let mut db = vec![0.0; o];
    for s in 0..n {
        for k in 0..o {
            let g = dy[s * o + k];
            db[k] += g;
            for j in 0..i {
                dw[k * i + j] += g * xd[s * i + j];
                dx[s * i + j] += g * wd[k * i + j];
            }
        }
    }
    Ok((dx, dw, db))
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Vec<f64>, NetError> {
    let (_, k) = logits.dims2()?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.to_f64().chunks(k) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / z));
    }
    Ok(out)
}

/// Mean negative log-likelihood of the true class and its gradient with
/// respect to the logits.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Vec<f64>), NetError> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(shape_err(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(NetError::LabelOutOfRange {
            label: bad,
            classes: k,
        });
    }
    let x = logits.to_f64();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * k];
    for (s, &label) in labels.iter().enumerate() {
        let row = &x[s * k..(s + 1) * k];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        let log_z = m + z.ln();
        loss += log_z - row[label];
        for j in 0..k {
            let p = (row[j] - log_z).exp();
            grad[s * k + j] = (p - if j == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}
