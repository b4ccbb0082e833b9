//! Deterministic synthetic bona fide speech and a simulated replay channel.
//!
//! A bona fide utterance is a harmonic source shaped by two resonances and
//! a syllable-rate envelope over a -40 dB noise floor. Its spoofed
//! counterpart is the same utterance band-limited to telephone bandwidth,
//! convolved with a decaying noise room response and requantized.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::protocol::{write_protocol, Label, Trial};
use super::DataError;
use crate::audio::{write_wav_pcm16, AudioBuffer};
use crate::features::fft::{fft_convolve, FftPlan};

const HARMONICS: usize = 8;
const OUTPUT_PEAK: f64 = 0.9;
const NOISE_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Total bona fide utterances across both splits.
    pub n_bonafide: usize,
    /// Total spoofed utterances across both splits.
    pub n_spoof: usize,
    /// Share of each class assigned to the development split.
    pub dev_fraction: f64,
    pub speakers_per_split: usize,
    pub sample_rate_hz: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub reverb_decay_s: f64,
    pub requant_bits: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_bonafide: 50,
            n_spoof: 50,
            dev_fraction: 0.375,
            speakers_per_split: 10,
            sample_rate_hz: 16000,
            min_duration_s: 2.0,
            max_duration_s: 4.0,
            band_low_hz: 300.0,
            band_high_hz: 3400.0,
            reverb_decay_s: 0.3,
            requant_bits: 12,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::InvalidConfig(m.to_string()));
        if self.n_bonafide == 0 || self.n_spoof == 0 {
            return bad("both class counts must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return bad("dev_fraction must lie in [0, 1)");
        }
        if self.speakers_per_split == 0 {
            return bad("speakers_per_split must be >= 1");
        }
        if self.sample_rate_hz < 8000 {
            return bad("sample rate must be at least 8000 Hz");
        }
        if !(self.min_duration_s > 0.0 && self.min_duration_s <= self.max_duration_s) {
            return bad("need 0 < min_duration_s <= max_duration_s");
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if !(0.0 <= self.band_low_hz
            && self.band_low_hz < self.band_high_hz
            && self.band_high_hz < nyquist)
        {
            return bad("replay band must satisfy 0 <= low < high < sample_rate/2");
        }
        if !(self.reverb_decay_s > 0.0) {
            return bad("reverb decay must be positive");
        }
        if !(2..=16).contains(&self.requant_bits) {
            return bad("requantization bits must lie in [2, 16]");
        }
        Ok(())
    }

    /// (bona fide, spoof) counts for the development split.
    pub fn dev_counts(&self) -> (usize, usize) {
        let share = |n: usize| ((n as f64) * self.dev_fraction).round() as usize;
        (share(self.n_bonafide), share(self.n_spoof))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed for (seed, index, stream).
pub fn stream_seed(seed: u64, index: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ index) ^ stream)
}

const SOURCE_STREAM: u64 = 1;
const REPLAY_STREAM: u64 = 2;

/// Two-pole resonator normalized to unit gain at its center frequency.
fn resonate(x: &[f64], center_hz: f64, bandwidth_hz: f64, sr: f64) -> Vec<f64> {
    let r = (-PI * bandwidth_hz / sr).exp();
    let theta = 2.0 * PI * center_hz / sr;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let gain = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
    let (mut y1, mut y2) = (0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = gain * v + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

fn scale_to_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        let g = peak / m;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn bona_fide_source(cfg: &SynthConfig, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, index, SOURCE_STREAM));
    let sr = cfg.sample_rate_hz as f64;
    let duration = rng.gen_range(cfg.min_duration_s..=cfg.max_duration_s);
    let n = (duration * sr).round() as usize;
    let f0 = rng.gen_range(100.0..300.0);
    let vibrato_hz = rng.gen_range(3.0..6.0);
    let vibrato_depth = rng.gen_range(0.01..0.04);
    let syllable_hz = rng.gen_range(2.5..5.0);
    let formant1 = rng.gen_range(300.0..900.0);
    let formant2 = rng.gen_range(1000.0..2500.0);
    let phase0: Vec<f64> = (0..HARMONICS)
        .map(|_| rng.gen_range(0.0..2.0 * PI))
        .collect();

    let mut phase = 0.0;
    let source: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let f = f0 * (1.0 + vibrato_depth * (2.0 * PI * vibrato_hz * t).sin());
            phase += 2.0 * PI * f / sr;
            (1..=HARMONICS)
                .map(|k| (k as f64 * phase + phase0[k - 1]).sin() / k as f64)
                .sum()
        })
        .collect();

    let r1 = resonate(&source, formant1, 90.0, sr);
    let r2 = resonate(&source, formant2, 120.0, sr);
    let ramp = 0.05 * sr;
    let mut voice: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let edge = (i as f64 / ramp).min((n - 1 - i) as f64 / ramp).min(1.0);
            let syllable = 0.35 + 0.65 * (PI * syllable_hz * t).sin().powi(2);
            (0.3 * source[i] + r1[i] + 0.7 * r2[i]) * syllable * edge
        })
        .collect();
    scale_to_peak(&mut voice, 1.0);
    for v in voice.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += NOISE_FLOOR * z;
    }
    scale_to_peak(&mut voice, OUTPUT_PEAK);
    voice
}

/// Zero-phase brick-wall band-pass.
fn band_pass(x: &[f64], low_hz: f64, high_hz: f64, sr: f64) -> Vec<f64> {
    let n = (2 * x.len()).next_power_of_two();
    let plan = FftPlan::new(n).expect("power of two");
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::default());
    plan.forward(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * sr / n as f64;
        if f < low_hz || f > high_hz {
            *c = Complex64::default();
        }
    }
    plan.inverse(&mut buf);
    buf[..x.len()].iter().map(|c| c.re).collect()
}

fn replay_channel(cfg: &SynthConfig, index: u64, clean: &[f64]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, index, REPLAY_STREAM));
    let sr = cfg.sample_rate_hz as f64;
    let band = band_pass(clean, cfg.band_low_hz, cfg.band_high_hz, sr);

    // 60 dB amplitude decay over the configured decay time.
    let ir_len = ((cfg.reverb_decay_s * sr).round() as usize).max(1);
    let decay = (1000.0f64).ln() / ir_len as f64;
    let mut ir: Vec<f64> = (0..ir_len)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.3 * z * (-decay * i as f64).exp()
        })
        .collect();
    ir[0] = 1.0;
    let mut wet = fft_convolve(&band, &ir);
    wet.truncate(clean.len());
    scale_to_peak(&mut wet, OUTPUT_PEAK);

    let levels = (1u32 << (cfg.requant_bits - 1)) as f64;
    wet.iter()
        .map(|&v| ((v * levels).round() / levels).clamp(-1.0, 1.0))
        .collect()
}

/// Generates utterance `index`. A spoofed utterance is the replayed
/// version of the bona fide utterance with the same index.
pub fn synth_utterance(
    cfg: &SynthConfig,
    index: u64,
    label: Label,
) -> Result<AudioBuffer, DataError> {
    cfg.validate()?;
    let clean = bona_fide_source(cfg, index);
    let samples = match label {
        Label::Bonafide => clean,
        Label::Spoof => replay_channel(cfg, index, &clean),
    };
    let id = format!("{}_{index:07}", label.as_str());
    AudioBuffer::new(
        samples.iter().map(|&v| v as f32).collect(),
        cfg.sample_rate_hz,
        id,
    )
    .map_err(|e| DataError::InvalidConfig(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Split::Train => "T",
            Split::Dev => "D",
        }
    }

    pub fn protocol_name(self) -> &'static str {
        match self {
            Split::Train => "train.txt",
            Split::Dev => "dev.txt",
        }
    }
}

/// Trial list of the synthetic corpus, with the generator index of each
/// utterance. Speaker ids never repeat across splits.
pub fn corpus_plan(cfg: &SynthConfig) -> Vec<(Split, u64, Trial)> {
    let (dev_b, dev_s) = cfg.dev_counts();
    let splits = [
        (Split::Train, cfg.n_bonafide - dev_b, cfg.n_spoof - dev_s),
        (Split::Dev, dev_b, dev_s),
    ];
    let mut plan = Vec::new();
    let mut index = 0u64;
    for (split, n_b, n_s) in splits {
        let labels =
            std::iter::repeat_n(Label::Bonafide, n_b).chain(std::iter::repeat_n(Label::Spoof, n_s));
        for (i, key) in labels.enumerate() {
            let (system_id, attack_id) = match key {
                Label::Bonafide => ("-", "-"),
                Label::Spoof => ("RP", "R1"),
            };
            plan.push((
                split,
                index,
                Trial {
                    speaker_id: format!("SG{}_{:03}", split.tag(), i % cfg.speakers_per_split),
                    utt_id: format!("SG_{}_{index:07}", split.tag()),
                    system_id: system_id.into(),
                    attack_id: attack_id.into(),
                    key,
                },
            ));
            index += 1;
        }
    }
    plan
}

/// Writes `train.txt`, `dev.txt` and `wav/<utt_id>.wav` under `out_dir`.
pub fn build_corpus(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<Vec<Trial>, DataError> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| DataError::io(&wav_dir, e))?;
    let plan = corpus_plan(cfg);

    plan.par_iter().try_for_each(|(_, index, trial)| {
        let mut audio = synth_utterance(cfg, *index, trial.key)?;
        audio.source_id = trial.utt_id.clone();
        let path = wav_dir.join(format!("{}.wav", trial.utt_id));
        write_wav_pcm16(&audio, &path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    })?;

    for split in [Split::Train, Split::Dev] {
        let trials: Vec<Trial> = plan
            .iter()
            .filter(|(s, _, _)| *s == split)
            .map(|(_, _, t)| t.clone())
            .collect();
        write_protocol(&trials, out_dir.join(split.protocol_name()))?;
    }
    Ok(plan.into_iter().map(|(_, _, t)| t).collect())
}
