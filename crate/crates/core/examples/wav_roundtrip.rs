//! Write a tone as 16-bit PCM, read it back and peak-normalize it.
//!
//!     cargo run --example wav_roundtrip -- /tmp/tone.wav

use spoofguard::{peak_normalize, read_wav, write_wav_pcm16, AudioBuffer};

fn main() -> anyhow::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "tone.wav".into());
    let sr = 16_000;
    let samples: Vec<f32> = (0..sr)
        .map(|n| 0.25 * (2.0 * std::f32::consts::PI * 440.0 * n as f32 / sr as f32).sin())
        .collect();
    let tone = AudioBuffer::new(samples, sr, "tone")?;
    write_wav_pcm16(&tone, &path)?;

    let back = read_wav(&path)?;
    let max_err = tone
        .samples
        .iter()
        .zip(&back.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    println!(
        "{path}: {} samples at {} Hz ({:.2} s), max quantization error {max_err:.2e}",
        back.len(),
        back.sample_rate_hz,
        back.duration_s()
    );

    let loud = peak_normalize(&back);
    let peak = loud.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    println!("after peak normalization: peak = {peak}");
    Ok(())
}
