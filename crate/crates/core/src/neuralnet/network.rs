//! ResNet classifier over single-channel spectrogram images.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{tensor_like, BasicBlock, BatchNorm2d, Conv2d, Linear, Visit, VisitMut};
use super::ops;
use super::optim::AdamState;
use super::tensor::{Real, Tensor};
use super::NetError;
use crate::features::{MelSpectrogram, Units};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    ResNet34,
    Tiny,
    Custom,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::ResNet34 => "resnet34",
            Preset::Tiny => "tiny",
            Preset::Custom => "custom",
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Preset::ResNet34 => 0,
            Preset::Tiny => 1,
            Preset::Custom => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        [Preset::ResNet34, Preset::Tiny, Preset::Custom]
            .into_iter()
            .find(|p| p.code() == code)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = NetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "resnet34" => Ok(Preset::ResNet34),
            "tiny" => Ok(Preset::Tiny),
            other => Err(NetError::InvalidConfig(format!(
                "unknown preset {other:?} (expected resnet34 or tiny)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub preset: Preset,
    pub stage_block_counts: [usize; 4],
    pub base_channels: usize,
    pub input_hw: usize,
    pub num_classes: usize,
    /// 1 for grayscale input; 3 replicates the single input channel so that
    /// externally trained image weights can be loaded.
    pub in_channels: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::resnet34()
    }
}

impl NetworkConfig {
    pub fn resnet34() -> Self {
        Self {
            preset: Preset::ResNet34,
            stage_block_counts: [3, 4, 6, 3],
            base_channels: 64,
            input_hw: 224,
            num_classes: 2,
            in_channels: 1,
        }
    }

    pub fn tiny() -> Self {
        Self {
            preset: Preset::Tiny,
            stage_block_counts: [1, 1, 1, 1],
            base_channels: 8,
            input_hw: 64,
            num_classes: 2,
            in_channels: 1,
        }
    }

    pub fn from_preset(p: Preset) -> Self {
        match p {
            Preset::Tiny => Self::tiny(),
            _ => Self::resnet34(),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidConfig(m));
        if self.stage_block_counts.contains(&0) {
            return bad(format!(
                "block counts {:?} must be >= 1",
                self.stage_block_counts
            ));
        }
        if self.base_channels == 0 {
            return bad("base_channels must be >= 1".into());
        }
        if self.num_classes != 2 {
            return bad(format!("num_classes must be 2, got {}", self.num_classes));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return bad(format!(
                "in_channels must be 1 or 3, got {}",
                self.in_channels
            ));
        }
        // stem /4, then three stride-2 stages
        if self.input_hw < 32 {
            return bad(format!(
                "input_hw {} is below the minimum of 32",
                self.input_hw
            ));
        }
        Ok(())
    }

    /// Convolutions on the main path plus the classifier; projection
    /// shortcuts are not counted.
    pub fn weighted_layer_count(&self) -> usize {
        1 + 2 * self.stage_block_counts.iter().sum::<usize>() + 1
    }
}

#[derive(Debug, Clone)]
struct NetCache {
    stem_pre_relu: Tensor<f64>,
    pool_input_len: usize,
    pool_argmax: Vec<usize>,
    pool_shape: Vec<usize>,
    feature_shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ResNet<T> {
    config: NetworkConfig,
    pub stem_conv: Conv2d<T>,
    pub stem_bn: BatchNorm2d<T>,
    /// Blocks with their `layer{stage}.{index}` names.
    pub blocks: Vec<(String, BasicBlock<T>)>,
    pub fc: Linear<T>,
    cache: Option<NetCache>,
}

impl<T: Real> ResNet<T> {
    /// Builds a network with seeded He-normal initialization.
    pub fn new(config: &NetworkConfig, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = config.base_channels;
        let stem_conv = Conv2d::he_normal(config.in_channels, base, 7, 2, 3, &mut rng);
        let mut blocks = Vec::new();
        let mut in_ch = base;
        for (stage, &count) in config.stage_block_counts.iter().enumerate() {
            let out_ch = base << stage;
            for i in 0..count {
                let down = stage > 0 && i == 0;
                let block = BasicBlock::new(in_ch, out_ch, down, &mut rng)?;
                blocks.push((format!("layer{}.{i}", stage + 1), block));
                in_ch = out_ch;
            }
        }
        let fc = Linear::init(in_ch, config.num_classes, &mut rng);
        Ok(Self {
            config: config.clone(),
            stem_conv,
            stem_bn: BatchNorm2d::new(base),
            blocks,
            fc,
            cache: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Counts the weighted layers actually present in the built topology.
    pub fn weighted_layer_count(&self) -> usize {
        1 + 2 * self.blocks.len() + 1
    }

    fn prepare_input(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let (n, c, h, w) = x.dims4()?;
        let hw = self.config.input_hw;
        if h != hw || w != hw {
            return Err(NetError::Shape(format!(
                "network expects {hw}x{hw} input, got {h}x{w}"
            )));
        }
        match (c, self.config.in_channels) {
            (a, b) if a == b => Ok(x.clone()),
            (1, 3) => {
                let mut data = Vec::with_capacity(3 * x.len());
                for plane in x.data().chunks(h * w) {
                    for _ in 0..3 {
                        data.extend_from_slice(plane);
                    }
                }
                Tensor::from_vec(&[n, 3, h, w], data)
            }
            (a, b) => Err(NetError::Shape(format!(
                "network expects {b} input channels, got {a}"
            ))),
        }
    }

    /// Eval-mode logits; never mutates the model.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let x = self.prepare_input(x)?;
        let h = ops::relu(&self.stem_bn.infer(&self.stem_conv.infer(&x)?)?);
        let (mut h, _) = ops::max_pool2d(&h, 3, 2, 1)?;
        for (_, block) in &self.blocks {
            h = block.infer(&h)?;
        }
        self.fc.infer(&ops::global_avg_pool(&h)?)
    }

    /// Train-mode logits, caching activations for [`ResNet::backward`].
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let x = self.prepare_input(x)?;
        let stem_pre_relu = self
            .stem_bn
            .forward_train(&self.stem_conv.forward_train(&x)?)?;
        let h = ops::relu(&stem_pre_relu);
        let (mut h, pool_argmax) = ops::max_pool2d(&h, 3, 2, 1)?;
        let pool_shape = h.shape().to_vec();
        for (_, block) in self.blocks.iter_mut() {
            h = block.forward_train(&h)?;
        }
        let feature_shape = h.shape().to_vec();
        let logits = self.fc.forward_train(&ops::global_avg_pool(&h)?)?;
        self.cache = Some(NetCache {
            pool_input_len: stem_pre_relu.len(),
            stem_pre_relu: stem_pre_relu.cast(),
            pool_argmax,
            pool_shape,
            feature_shape,
        });
        Ok(logits)
    }

    /// Backpropagates d(loss)/d(logits), accumulating parameter gradients.
    pub fn backward(&mut self, dlogits: &Tensor<T>) -> Result<(), NetError> {
        let cache = self.cache.take().ok_or_else(|| {
            NetError::Shape("backward called without a training forward pass".into())
        })?;
        let dfeat = self.fc.backward(dlogits)?;
        let fs = &cache.feature_shape;
        let mut dh: Tensor<T> = tensor_like(
            fs,
            &ops::global_avg_pool_backward(&dfeat.to_f64(), fs[2] * fs[3]),
        )?;
        for (_, block) in self.blocks.iter_mut().rev() {
            dh = block.backward(&dh)?;
        }
        debug_assert_eq!(dh.shape(), &cache.pool_shape[..]);
        let dpool =
            ops::max_pool2d_backward(cache.pool_input_len, &cache.pool_argmax, &dh.to_f64());
        let dstem = ops::relu_backward(&cache.stem_pre_relu, &dpool);
        let dstem = tensor_like(cache.stem_pre_relu.shape(), &dstem)?;
        self.stem_conv.backward(&self.stem_bn.backward(&dstem)?)?;
        Ok(())
    }

    pub fn visit(&self, f: &mut Visit<T>) {
        self.stem_conv.visit("stem.conv", f);
        self.stem_bn.visit("stem.bn", f);
        for (name, block) in &self.blocks {
            block.visit(name, f);
        }
        self.fc.visit("fc", f);
    }

    pub fn visit_mut(&mut self, f: &mut VisitMut<T>) {
        self.stem_conv.visit_mut("stem.conv", f);
        self.stem_bn.visit_mut("stem.bn", f);
        for (name, block) in self.blocks.iter_mut() {
            block.visit_mut(name, f);
        }
        self.fc.visit_mut("fc", f);
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t, trainable| {
            if trainable {
                n += t.len();
            }
        });
        n
    }

    pub fn zero_grad(&mut self) {
        self.visit_mut(&mut |_, t, _| t.zero_grad());
    }

    /// One Adam step over every trainable parameter, then clears gradients.
    pub fn apply_adam(&mut self, state: &mut AdamState) -> Result<(), NetError> {
        state.begin_step();
        let mut slot = 0;
        let mut result = Ok(());
        self.visit_mut(&mut |_, t, trainable| {
            if !trainable || result.is_err() {
                return;
            }
            let grad: Vec<f64> = match t.grad() {
                Some(g) => g.iter().map(|v| v.as_f64()).collect(),
                None => vec![0.0; t.len()],
            };
            result = state.update_slot(slot, t.data_mut(), &grad);
            t.zero_grad();
            slot += 1;
        });
        result
    }

    /// Detection score logit(bonafide) - logit(spoof) for each input row.
    pub fn score_batch(&self, x: &Tensor<T>) -> Result<Vec<f64>, NetError> {
        score_from_logits(&self.infer(x)?)
    }

    /// Scores one feature grid, which must match the network input size.
    pub fn score_utterance(&self, mel: &MelSpectrogram) -> Result<f64, NetError> {
        let x = Tensor::from_vec(
            &[1, 1, self.config.input_hw, self.config.input_hw],
            network_input(mel, self.config.input_hw)?,
        )?;
        Ok(self.score_batch(&x)?[0])
    }
}

/// Per-row logit difference, class 1 (bona fide) minus class 0 (spoof).
pub fn score_from_logits<T: Real>(logits: &Tensor<T>) -> Result<Vec<f64>, NetError> {
    let (_, k) = logits.dims2()?;
    if k != 2 {
        return Err(NetError::Shape(format!(
            "expected 2 logits per row, got {k}"
        )));
    }
    Ok(logits
        .data()
        .chunks(2)
        .map(|r| r[1].as_f64() - r[0].as_f64())
        .collect())
}

/// Maps a decibel grid from [db_floor, 0] onto [0, 1]; power grids pass
/// through unchanged.
pub fn network_input<T: Real>(mel: &MelSpectrogram, input_hw: usize) -> Result<Vec<T>, NetError> {
    if mel.rows != input_hw || mel.cols != input_hw {
        return Err(NetError::Shape(format!(
            "{}: features are {}x{}, network expects {input_hw}x{input_hw}",
            mel.source_id, mel.rows, mel.cols
        )));
    }
    let floor = mel.config.db_floor;
    Ok(mel
        .values
        .iter()
        .map(|&v| match mel.units {
            Units::Decibel => T::of((v as f64 - floor) / -floor),
            Units::Power => T::of(v as f64),
        })
        .collect())
}
