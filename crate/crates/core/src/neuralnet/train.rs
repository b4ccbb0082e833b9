use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::ResNet;
use super::ops;
use super::optim::AdamState;
use super::tensor::{Real, Tensor};
use super::weights::save_weights;
use super::NetError;
use crate::data::stream_seed;

const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRunConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weights are written here after every epoch.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            batch_size: 64,
            seed: 0,
            checkpoint: None,
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NetError::InvalidConfig(format!(
                "epochs={} and batch_size={} must both be >= 1",
                self.epochs, self.batch_size
            )));
        }
        Ok(())
    }
}

/// Single-channel square inputs with labels 0 = spoof, 1 = bona fide.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    hw: usize,
    inputs: Vec<Vec<f32>>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(hw: usize) -> Self {
        Self {
            hw,
            ..Self::default()
        }
    }

    pub fn push(&mut self, input: Vec<f32>, label: usize) -> Result<(), NetError> {
        if input.len() != self.hw * self.hw {
            return Err(NetError::Shape(format!(
                "example has {} values, expected {}x{}",
                input.len(),
                self.hw,
                self.hw
            )));
        }
        if label > 1 {
            return Err(NetError::LabelOutOfRange { label, classes: 2 });
        }
        self.inputs.push(input);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn hw(&self) -> usize {
        self.hw
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i]
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        let bona = self.labels.iter().filter(|&&l| l == 1).count();
        if bona == 0 {
            return Err(NetError::SingleClass("spoof"));
        }
        if bona == self.len() {
            return Err(NetError::SingleClass("bonafide"));
        }
        Ok(())
    }

    /// Stacks the selected examples into an (N, 1, hw, hw) tensor.
    pub fn batch<T: Real>(&self, idx: &[usize]) -> Result<(Tensor<T>, Vec<usize>), NetError> {
        let mut data = Vec::with_capacity(idx.len() * self.hw * self.hw);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            data.extend(self.inputs[i].iter().map(|&v| T::of(v as f64)));
            labels.push(self.labels[i]);
        }
        Ok((
            Tensor::from_vec(&[idx.len(), 1, self.hw, self.hw], data)?,
            labels,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean per-example training loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch training with a freshly seeded shuffle every epoch.
pub fn train<T: Real>(
    model: &mut ResNet<T>,
    data: &Dataset,
    run: &TrainRunConfig,
    opt: &mut AdamState,
) -> Result<TrainOutcome, NetError> {
    run.validate()?;
    opt.validate()?;
    data.validate()?;
    if data.hw() != model.config().input_hw {
        return Err(NetError::Shape(format!(
            "dataset is {0}x{0}, network expects {1}x{1}",
            data.hw(),
            model.config().input_hw
        )));
    }
    model.zero_grad();
    let mut history = Vec::with_capacity(run.epochs);
    for epoch in 0..run.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(stream_seed(run.seed, epoch as u64, SHUFFLE_STREAM));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(run.batch_size) {
            let (x, labels) = data.batch::<T>(chunk)?;
            let logits = model.forward_train(&x)?;
            let (loss, grad) = ops::softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(NetError::InvalidConfig(format!(
                    "training diverged in epoch {} (loss {loss})",
                    epoch + 1
                )));
            }
            total += loss * chunk.len() as f64;
            model.backward(&Tensor::from_f64(logits.shape(), &grad)?)?;
            model.apply_adam(opt)?;
        }
        history.push(total / data.len() as f64);
        if let Some(path) = &run.checkpoint {
            save_weights(model, path)?;
        }
    }
    Ok(TrainOutcome {
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::NetworkConfig;

    /// Bright upper half for bona fide, bright lower half for spoof.
    fn separable(n: usize) -> Dataset {
        let hw = 64;
        let mut d = Dataset::new(hw);
        for i in 0..n {
            let label = i % 2;
            let jitter = (i as f32 * 0.37).sin() * 0.05;
            let input = (0..hw * hw)
                .map(|p| {
                    let upper = p / hw < hw / 2;
                    if upper == (label == 1) {
                        0.8 + jitter
                    } else {
                        0.2 - jitter
                    }
                })
                .collect();
            d.push(input, label).unwrap();
        }
        d
    }

    #[test]
    fn defaults_match_run_configuration() {
        let r = TrainRunConfig::default();
        assert_eq!((r.epochs, r.batch_size), (8, 64));
    }

    #[test]
    fn loss_decreases_on_separable_data() {
        let data = separable(32);
        let mut net = ResNet::<f32>::new(&NetworkConfig::tiny(), 11).unwrap();
        let run = TrainRunConfig {
            epochs: 4,
            batch_size: 8,
            seed: 3,
            checkpoint: None,
        };
        let out = train(&mut net, &data, &run, &mut AdamState::default()).unwrap();
        assert_eq!(out.loss_history.len(), 4);
        assert!(
            out.loss_history[3] < out.loss_history[0],
            "{:?}",
            out.loss_history
        );
    }

    #[test]
    fn same_seed_same_history() {
        let data = separable(12);
        let run = TrainRunConfig {
            epochs: 2,
            batch_size: 5,
            seed: 1,
            checkpoint: None,
        };
        let go = || {
            let mut net = ResNet::<f32>::new(&NetworkConfig::tiny(), 2).unwrap();
            let out = train(&mut net, &data, &run, &mut AdamState::default()).unwrap();
            (out, net.fc.weight.clone())
        };
        let (a, wa) = go();
        let (b, wb) = go();
        assert_eq!(a, b);
        assert_eq!(wa, wb);
    }

    #[test]
    fn degenerate_datasets_rejected() {
        let mut net = ResNet::<f32>::new(&NetworkConfig::tiny(), 0).unwrap();
        let run = TrainRunConfig::default();
        let empty = Dataset::new(64);
        assert!(matches!(
            train(&mut net, &empty, &run, &mut AdamState::default()),
            Err(NetError::EmptyDataset)
        ));
        let mut one = Dataset::new(64);
        one.push(vec![0.0; 64 * 64], 1).unwrap();
        one.push(vec![0.1; 64 * 64], 1).unwrap();
        assert!(matches!(
            train(&mut net, &one, &run, &mut AdamState::default()),
            Err(NetError::SingleClass(_))
        ));
        assert!(one.push(vec![0.0; 3], 0).is_err());
        assert!(one.push(vec![0.0; 64 * 64], 2).is_err());
        let bad = TrainRunConfig { epochs: 0, ..run };
        assert!(bad.validate().is_err());
    }
}
