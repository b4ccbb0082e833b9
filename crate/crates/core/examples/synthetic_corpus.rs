//! Generate the synthetic bona fide / replay corpus and compare band
//! energies of the two classes.
//!
//!     cargo run --example synthetic_corpus -- /tmp/corpus

use spoofguard::data::{build_corpus, label_counts, synth_utterance, Label, SynthConfig};
use spoofguard::features::fft_power;

/// Mean power above `hz` relative to total, in dB, over 1024-sample frames.
fn high_band_db(samples: &[f32], sr: u32, hz: f64) -> f64 {
    let n = 1024;
    let (mut hi, mut total) = (0.0, 0.0);
    for frame in samples.chunks_exact(n) {
        let x: Vec<f64> = frame
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos();
                v as f64 * w
            })
            .collect();
        for (k, p) in fft_power(&x).unwrap().into_iter().enumerate() {
            total += p;
            if k as f64 * sr as f64 / n as f64 > hz {
                hi += p;
            }
        }
    }
    10.0 * (hi / total).log10()
}

fn main() -> anyhow::Result<()> {
    let cfg = SynthConfig {
        seed: 7,
        n_bonafide: 8,
        n_spoof: 8,
        ..SynthConfig::default()
    };
    for (i, label) in [(0, Label::Bonafide), (1, Label::Spoof)] {
        let u = synth_utterance(&cfg, i, label)?;
        println!(
            "{label:>8}: {:.2} s, energy above 4 kHz {:.1} dB re total",
            u.duration_s(),
            high_band_db(&u.samples, u.sample_rate_hz, 4000.0)
        );
    }

    if let Some(dir) = std::env::args().nth(1) {
        let trials = build_corpus(&cfg, &dir)?;
        let (b, s) = label_counts(&trials);
        println!(
            "{dir}: {} utterances ({b} bona fide, {s} spoof), train.txt + dev.txt",
            trials.len()
        );
    }
    Ok(())
}
