//! Central finite-difference gradient checks, run entirely in f64.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use spoofguard::neuralnet::layers::VisitMut;
use spoofguard::neuralnet::ops;
use spoofguard::neuralnet::{BasicBlock, BatchNorm2d, Conv2d, Linear, Tensor};

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const ABS_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let d = Normal::new(0.0, 1.0).unwrap();
    Tensor::from_vec(shape, (0..n).map(|_| d.sample(rng)).collect()).unwrap()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// A layer with train-mode forward/backward and named parameters.
pub trait Checked: Clone {
    fn fwd(&mut self, x: &Tensor<f64>) -> Tensor<f64>;
    fn bwd(&mut self, dy: &Tensor<f64>) -> Tensor<f64>;
    fn params(&mut self, f: &mut VisitMut<f64>);
}

macro_rules! checked {
    ($ty:ty) => {
        impl Checked for $ty {
            fn fwd(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
                self.forward_train(x).unwrap()
            }
            fn bwd(&mut self, dy: &Tensor<f64>) -> Tensor<f64> {
                self.backward(dy).unwrap()
            }
            fn params(&mut self, f: &mut VisitMut<f64>) {
                self.visit_mut("p", f)
            }
        }
    };
}

checked!(Conv2d<f64>);
checked!(BatchNorm2d<f64>);
checked!(Linear<f64>);
checked!(BasicBlock<f64>);

/// conv -> ReLU, to exercise the ReLU gate inside a composition.
#[derive(Clone)]
pub struct ConvRelu {
    pub conv: Conv2d<f64>,
    pre: Option<Tensor<f64>>,
}

impl ConvRelu {
    pub fn new(conv: Conv2d<f64>) -> Self {
        Self { conv, pre: None }
    }
}

impl Checked for ConvRelu {
    fn fwd(&mut self, x: &Tensor<f64>) -> Tensor<f64> {
        let pre = self.conv.forward_train(x).unwrap();
        let y = ops::relu(&pre);
        self.pre = Some(pre);
        y
    }
    fn bwd(&mut self, dy: &Tensor<f64>) -> Tensor<f64> {
        let pre = self.pre.take().unwrap();
        let d = ops::relu_backward(&pre, &dy.to_f64());
        self.conv
            .backward(&Tensor::from_vec(dy.shape(), d).unwrap())
            .unwrap()
    }
    fn params(&mut self, f: &mut VisitMut<f64>) {
        self.conv.visit_mut("conv", f)
    }
}

fn weighted_sum(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn perturb<L: Checked>(layer: &mut L, slot: usize, idx: usize, delta: f64) {
    let mut k = 0;
    layer.params(&mut |_, t, trainable| {
        if trainable {
            if k == slot {
                t.data_mut()[idx] += delta;
            }
            k += 1;
        }
    });
}

/// Largest relative error over the input gradient and every trainable
/// parameter gradient of L = sum(r * layer(x)) for a random projection r.
pub fn check_layer<L: Checked>(layer: &L, x: &Tensor<f64>, seed: u64) -> f64 {
    let mut r_rng = rng(seed ^ 0xD1CE);
    let mut probe = layer.clone();
    let y = probe.fwd(x);
    let r = randn(y.shape(), &mut r_rng);
    let dx = probe.bwd(&r);

    let loss_at = |l: &L, x: &Tensor<f64>| weighted_sum(&l.clone().fwd(x), &r);
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[i] += STEP;
        xm.data_mut()[i] -= STEP;
        let num = (loss_at(layer, &xp) - loss_at(layer, &xm)) / (2.0 * STEP);
        worst = worst.max(rel_err(dx.data()[i], num));
    }

    let mut grads = Vec::new();
    probe.params(&mut |_, t, trainable| {
        if trainable {
            grads.push(
                t.grad()
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; t.len()]),
            );
        }
    });
    for (slot, g) in grads.iter().enumerate() {
        for (idx, &a) in g.iter().enumerate() {
            let (mut lp, mut lm) = (layer.clone(), layer.clone());
            perturb(&mut lp, slot, idx, STEP);
            perturb(&mut lm, slot, idx, -STEP);
            let num = (loss_at(&lp, x) - loss_at(&lm, x)) / (2.0 * STEP);
            worst = worst.max(rel_err(a, num));
        }
    }
    worst
}

pub fn conv_case(seed: u64) -> f64 {
    let mut g = rng(seed);
    let w = randn(&[3, 2, 3, 3], &mut g);
    let b = randn(&[3], &mut g);
    let x = randn(&[1, 2, 5, 5], &mut g);
    check_layer(
        &Conv2d::new(w, Some(b), 1 + (seed as usize % 2), 1),
        &x,
        seed,
    )
}

pub fn batchnorm_case(seed: u64) -> f64 {
    let mut g = rng(seed);
    let mut bn = BatchNorm2d::new(3);
    bn.gamma = randn(&[3], &mut g);
    bn.beta = randn(&[3], &mut g);
    let x = randn(&[2, 3, 3, 3], &mut g);
    check_layer(&bn, &x, seed)
}

pub fn relu_case(seed: u64) -> f64 {
    let mut g = rng(seed);
    let w = randn(&[2, 2, 3, 3], &mut g);
    let x = randn(&[2, 2, 4, 4], &mut g);
    check_layer(&ConvRelu::new(Conv2d::new(w, None, 1, 1)), &x, seed)
}

pub fn linear_case(seed: u64) -> f64 {
    let mut g = rng(seed);
    let w = randn(&[3, 5], &mut g);
    let b = randn(&[3], &mut g);
    let x = randn(&[4, 5], &mut g);
    check_layer(&Linear::new(w, b), &x, seed)
}

/// Alternates identity and projection shortcuts with seed parity.
pub fn residual_case(seed: u64) -> f64 {
    let mut g = rng(seed);
    let down = seed % 2 == 1;
    let mut block = BasicBlock::new(2, if down { 4 } else { 2 }, down, &mut g).unwrap();
    let mut k = 0u64;
    block.visit_mut("b", &mut |_, t, trainable| {
        if trainable && t.shape().len() == 1 {
            // non-trivial gamma/beta
            let mut gg = rng(seed.wrapping_mul(31).wrapping_add(k));
            *t = randn(t.shape(), &mut gg);
            k += 1;
        }
    });
    let x = randn(&[2, 2, 4, 4], &mut g);
    check_layer(&block, &x, seed)
}

pub fn cross_entropy_case(seed: u64) -> f64 {
    let mut g = rng(seed);
    let logits = randn(&[5, 2], &mut g);
    let labels: Vec<usize> = (0..5).map(|i| (i + seed as usize) % 2).collect();
    let (_, grad) = ops::softmax_cross_entropy(&logits, &labels).unwrap();
    let loss = |t: &Tensor<f64>| ops::softmax_cross_entropy(t, &labels).unwrap().0;
    let mut worst: f64 = 0.0;
    for i in 0..logits.len() {
        let (mut p, mut m) = (logits.clone(), logits.clone());
        p.data_mut()[i] += STEP;
        m.data_mut()[i] -= STEP;
        let num = (loss(&p) - loss(&m)) / (2.0 * STEP);
        worst = worst.max(rel_err(grad[i], num));
    }
    worst
}

/// (name, tolerance, case) for every checked layer type.
pub fn gradient_suite() -> Vec<(&'static str, f64, fn(u64) -> f64)> {
    vec![
        ("conv2d", 1e-4, conv_case as fn(u64) -> f64),
        ("batchnorm2d", 1e-3, batchnorm_case),
        ("relu", 1e-4, relu_case),
        ("residual_block", 1e-4, residual_case),
        ("linear", 1e-4, linear_case),
        ("softmax_cross_entropy", 1e-5, cross_entropy_case),
    ]
}
