//! Spoofed-speech countermeasure toolkit.
//!
//! Speech is turned into decibel-scaled Mel-spectrograms ([`features`]),
//! classified as bona fide or spoofed by a residual convolutional network
//! trained from scratch ([`neuralnet`]), and scored with the equal error
//! rate and the tandem detection cost function ([`metrics`]). The [`data`]
//! module generates a synthetic replay-attack corpus so that the whole
//! pipeline runs without licensed audio.

pub mod audio;
pub mod cli;
pub mod data;
pub mod features;
pub mod metrics;
pub mod neuralnet;

pub use audio::{peak_normalize, read_wav, write_wav_pcm16, AudioBuffer};
pub use features::{extract_mel_spectrogram, FrontEndConfig, MelSpectrogram};
pub use metrics::{compute_eer, det_curve, min_tdcf_normalized, ScoreSet, TdcfCosts};
