//! Residual CNN classifier: tensors, kernels, layers, training and weight
//! persistence.

pub mod layers;
pub mod network;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod train;
pub mod weights;

use std::path::PathBuf;

pub use layers::{BasicBlock, BatchNorm2d, Conv2d, Linear};
pub use network::{score_from_logits, NetworkConfig, Preset, ResNet};
pub use optim::{adam_step, AdamState};
pub use tensor::{Real, Tensor};
pub use train::{train, Dataset, TrainOutcome, TrainRunConfig};
pub use weights::{decode_weights, encode_weights, load_weights, load_weights_for, save_weights};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains only {0} examples; both classes are required")]
    SingleClass(&'static str),
    #[error("weight file: {0}")]
    Format(String),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    TensorMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
