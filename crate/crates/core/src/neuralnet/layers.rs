//! Stateful layers. `infer` is pure; `forward_train` caches what `backward`
//! needs and `backward` accumulates parameter gradients.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ops::{self, BatchNormCache};
use super::tensor::{Real, Tensor};
use super::NetError;

/// Callback over named tensors; the flag marks trainable parameters.
pub type Visit<'a, T> = dyn FnMut(&str, &Tensor<T>, bool) + 'a;
pub type VisitMut<'a, T> = dyn FnMut(&str, &mut Tensor<T>, bool) + 'a;

pub const BN_MOMENTUM: f64 = 0.1;

fn missing_cache(layer: &str) -> NetError {
    NetError::Shape(format!(
        "{layer}: backward called without a training forward pass"
    ))
}

pub(crate) fn tensor_like<T: Real>(shape: &[usize], v: &[f64]) -> Result<Tensor<T>, NetError> {
    Tensor::from_f64(shape, v)
}

fn normal_tensor<T: Real, R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::of(dist.sample(rng))).collect();
    Tensor::from_vec(shape, data).expect("shape matches")
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub pad: usize,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(weight: Tensor<T>, bias: Option<Tensor<T>>, stride: usize, pad: usize) -> Self {
        Self {
            weight,
            bias,
            stride,
            pad,
            input: None,
        }
    }

    /// Bias-free convolution with He-normal weights, std sqrt(2 / fan_in).
    pub fn he_normal<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_ch * kernel * kernel) as f64;
        let w = normal_tensor(&[out_ch, in_ch, kernel, kernel], (2.0 / fan_in).sqrt(), rng);
        Self::new(w, None, stride, pad)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        ops::conv2d(x, &self.weight, self.bias.as_ref(), self.stride, self.pad)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let x = self.input.take().ok_or_else(|| missing_cache("conv"))?;
        let g = ops::conv2d_backward(&x, &self.weight, self.stride, self.pad, dy)?;
        self.weight.accumulate_grad(&g.dweight);
        if let Some(b) = self.bias.as_mut() {
            b.accumulate_grad(&g.dbias);
        }
        tensor_like(x.shape(), &g.dx)
    }

    pub fn visit(&self, prefix: &str, f: &mut Visit<T>) {
        f(&format!("{prefix}.weight"), &self.weight, true);
        if let Some(b) = &self.bias {
            f(&format!("{prefix}.bias"), b, true);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<T>) {
        f(&format!("{prefix}.weight"), &mut self.weight, true);
        if let Some(b) = self.bias.as_mut() {
            f(&format!("{prefix}.bias"), b, true);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    cache: Option<BatchNormCache>,
}

impl<T: Real> BatchNorm2d<T> {
    /// gamma = 1, beta = 0, running mean 0 and variance 1.
    pub fn new(channels: usize) -> Self {
        let ones = || {
            let mut t = Tensor::zeros(&[channels]);
            t.fill(T::one());
            t
        };
        Self {
            gamma: ones(),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: ones(),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        ops::batchnorm2d_eval(
            x,
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
        )
    }

    /// Normalizes by batch statistics and folds them into the running
    /// estimates (unbiased variance).
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let (y, cache) = ops::batchnorm2d_train(x, &self.gamma, &self.beta)?;
        let (n, _, h, w) = x.dims4()?;
        let m = (n * h * w) as f64;
        let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&cache.mean) {
            *r = T::of((1.0 - BN_MOMENTUM) * r.as_f64() + BN_MOMENTUM * b);
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&cache.var) {
            *r = T::of((1.0 - BN_MOMENTUM) * r.as_f64() + BN_MOMENTUM * b * unbias);
        }
        self.cache = Some(cache);
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| missing_cache("batch norm"))?;
        let (dx, dgamma, dbeta) = ops::batchnorm2d_backward(dy, &self.gamma, &cache)?;
        self.gamma.accumulate_grad(&dgamma);
        self.beta.accumulate_grad(&dbeta);
        tensor_like(dy.shape(), &dx)
    }

    pub fn visit(&self, prefix: &str, f: &mut Visit<T>) {
        f(&format!("{prefix}.weight"), &self.gamma, true);
        f(&format!("{prefix}.bias"), &self.beta, true);
        f(&format!("{prefix}.running_mean"), &self.running_mean, false);
        f(&format!("{prefix}.running_var"), &self.running_var, false);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<T>) {
        f(&format!("{prefix}.weight"), &mut self.gamma, true);
        f(&format!("{prefix}.bias"), &mut self.beta, true);
        f(
            &format!("{prefix}.running_mean"),
            &mut self.running_mean,
            false,
        );
        f(
            &format!("{prefix}.running_var"),
            &mut self.running_var,
            false,
        );
    }
}

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Self {
        Self {
            weight,
            bias,
            input: None,
        }
    }

    /// Weights drawn from N(0, 1 / fan_in), zero bias.
    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let w = normal_tensor(&[outputs, inputs], (1.0 / inputs as f64).sqrt(), rng);
        Self::new(w, Tensor::zeros(&[outputs]))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        ops::linear(x, &self.weight, &self.bias)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let x = self.input.take().ok_or_else(|| missing_cache("linear"))?;
        let (dx, dw, db) = ops::linear_backward(&x, &self.weight, &dy.to_f64())?;
        self.weight.accumulate_grad(&dw);
        self.bias.accumulate_grad(&db);
        tensor_like(x.shape(), &dx)
    }

    pub fn visit(&self, prefix: &str, f: &mut Visit<T>) {
        f(&format!("{prefix}.weight"), &self.weight, true);
        f(&format!("{prefix}.bias"), &self.bias, true);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<T>) {
        f(&format!("{prefix}.weight"), &mut self.weight, true);
        f(&format!("{prefix}.bias"), &mut self.bias, true);
    }
}

fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NetError> {
    if a.shape() != b.shape() {
        return Err(NetError::Shape(format!(
            "residual sum of {:?} and shortcut {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x + y)
        .collect();
    Tensor::from_vec(a.shape(), data)
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    pre_relu1: Tensor<T>,
    pre_out: Tensor<T>,
}

/// y = ReLU(F(x) + shortcut(x)) with F = conv3x3 -> BN -> ReLU -> conv3x3 -> BN.
#[derive(Debug, Clone)]
pub struct BasicBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    /// 1x1 strided projection used when the block downsamples.
    pub downsample: Option<(Conv2d<T>, BatchNorm2d<T>)>,
    cache: Option<BlockCache<T>>,
}

impl<T: Real> BasicBlock<T> {
    /// A downsampling block halves the spatial size with stride 2 and
    /// projects the shortcut; otherwise channel counts must agree.
    pub fn new<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        downsample: bool,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        if !downsample && in_ch != out_ch {
            return Err(NetError::Shape(format!(
                "identity shortcut needs equal channels, got {in_ch} -> {out_ch}"
            )));
        }
        let stride = if downsample { 2 } else { 1 };
        let conv1 = Conv2d::he_normal(in_ch, out_ch, 3, stride, 1, rng);
        let conv2 = Conv2d::he_normal(out_ch, out_ch, 3, 1, 1, rng);
        let downsample = downsample.then(|| {
            (
                Conv2d::he_normal(in_ch, out_ch, 1, 2, 0, rng),
                BatchNorm2d::new(out_ch),
            )
        });
        Ok(Self {
            conv1,
            bn1: BatchNorm2d::new(out_ch),
            conv2,
            bn2: BatchNorm2d::new(out_ch),
            downsample,
            cache: None,
        })
    }

    /// Zeroes every parameter on the residual path F.
    pub fn zero_residual(&mut self) {
        for t in [
            &mut self.conv1.weight,
            &mut self.conv2.weight,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
        ] {
            t.fill(T::zero());
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let h = ops::relu(&self.bn1.infer(&self.conv1.infer(x)?)?);
        let f = self.bn2.infer(&self.conv2.infer(&h)?)?;
        let s = match &self.downsample {
            Some((conv, bn)) => bn.infer(&conv.infer(x)?)?,
            None => x.clone(),
        };
        Ok(ops::relu(&add(&f, &s)?))
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let pre_relu1 = self.bn1.forward_train(&self.conv1.forward_train(x)?)?;
        let h = ops::relu(&pre_relu1);
        let f = self.bn2.forward_train(&self.conv2.forward_train(&h)?)?;
        let s = match self.downsample.as_mut() {
            Some((conv, bn)) => bn.forward_train(&conv.forward_train(x)?)?,
            None => x.clone(),
        };
        let pre_out = add(&f, &s)?;
        let y = ops::relu(&pre_out);
        self.cache = Some(BlockCache { pre_relu1, pre_out });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| missing_cache("residual block"))?;
        let dz = tensor_like(
            dy.shape(),
            &ops::relu_backward(&cache.pre_out, &dy.to_f64()),
        )?;
        let dh = self.conv2.backward(&self.bn2.backward(&dz)?)?;
        let dpre1 = tensor_like(
            dh.shape(),
            &ops::relu_backward(&cache.pre_relu1, &dh.to_f64()),
        )?;
        let dx_f = self.conv1.backward(&self.bn1.backward(&dpre1)?)?;
        let dx_s = match self.downsample.as_mut() {
            Some((conv, bn)) => conv.backward(&bn.backward(&dz)?)?,
            None => dz,
        };
        add(&dx_f, &dx_s)
    }

    pub fn visit(&self, prefix: &str, f: &mut Visit<T>) {
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        self.bn1.visit(&format!("{prefix}.bn1"), f);
        self.conv2.visit(&format!("{prefix}.conv2"), f);
        self.bn2.visit(&format!("{prefix}.bn2"), f);
        if let Some((conv, bn)) = &self.downsample {
            conv.visit(&format!("{prefix}.downsample.conv"), f);
            bn.visit(&format!("{prefix}.downsample.bn"), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut VisitMut<T>) {
        self.conv1.visit_mut(&format!("{prefix}.conv1"), f);
        self.bn1.visit_mut(&format!("{prefix}.bn1"), f);
        self.conv2.visit_mut(&format!("{prefix}.conv2"), f);
        self.bn2.visit_mut(&format!("{prefix}.bn2"), f);
        if let Some((conv, bn)) = self.downsample.as_mut() {
            conv.visit_mut(&format!("{prefix}.downsample.conv"), f);
            bn.visit_mut(&format!("{prefix}.downsample.bn"), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        normal_tensor(shape, 1.0, &mut rng)
    }

    #[test]
    fn zero_residual_block_is_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut block = BasicBlock::<f64>::new(3, 3, false, &mut rng).unwrap();
        block.zero_residual();
        let x = random(&[2, 3, 5, 5], 2);
        assert_eq!(block.infer(&x).unwrap(), ops::relu(&x));
        assert_eq!(block.forward_train(&x).unwrap(), ops::relu(&x));
        let mut nonneg = ops::relu(&x);
        nonneg.data_mut()[0] = 0.5;
        assert_eq!(block.infer(&nonneg).unwrap().data(), nonneg.data());
    }

    #[test]
    fn downsampling_block_halves_and_projects() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut block = BasicBlock::<f32>::new(4, 8, true, &mut rng).unwrap();
        let x = random(&[2, 4, 8, 8], 4).cast::<f32>();
        let y = block.forward_train(&x).unwrap();
        assert_eq!(y.shape(), &[2, 8, 4, 4]);
        let dx = block.backward(&y).unwrap();
        assert_eq!(dx.shape(), x.shape());
        assert!(BasicBlock::<f32>::new(4, 8, false, &mut rng).is_err());
    }

    #[test]
    fn running_stats_track_batches() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        let x = Tensor::from_f64(&[1, 1, 1, 2], &[1.0, 3.0]).unwrap();
        bn.forward_train(&x).unwrap();
        // mean 2, unbiased variance 2
        assert!((bn.running_mean.data()[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var.data()[0] - (0.9 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn eval_before_updates_uses_initial_stats() {
        let bn = BatchNorm2d::<f64>::new(2);
        let x = random(&[1, 2, 3, 3], 5);
        let y = bn.infer(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b / (1.0 + ops::BN_EPS).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let mut lin = Linear::<f64>::new(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2]));
        assert!(lin.backward(&Tensor::zeros(&[1, 2])).is_err());
    }
}
