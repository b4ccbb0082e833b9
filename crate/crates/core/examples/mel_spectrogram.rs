//! Log-Mel spectrogram of a WAV file (or a synthetic chirp), with an
//! optional grayscale PGM rendering.
//!
//!     cargo run --example mel_spectrogram -- speech.wav speech.pgm

use spoofguard::features::{export_pgm, mel::center_frequencies};
use spoofguard::{extract_mel_spectrogram, read_wav, AudioBuffer, FrontEndConfig};

fn chirp() -> AudioBuffer {
    let sr = 16_000u32;
    let samples = (0..2 * sr)
        .map(|n| {
            let t = n as f64 / sr as f64;
            // 100 Hz -> 6 kHz linear sweep over two seconds
            (2.0 * std::f64::consts::PI * (100.0 * t + 1475.0 * t * t)).sin() as f32 * 0.5
        })
        .collect();
    AudioBuffer::new(samples, sr, "chirp").unwrap()
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let audio = match args.next() {
        Some(p) => read_wav(p)?,
        None => chirp(),
    };
    let cfg = FrontEndConfig::default();
    let mel = extract_mel_spectrogram(&audio, &cfg)?;
    let (lo, hi) = mel
        .values
        .iter()
        .fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    println!(
        "{}: {}x{} grid ({}), values in [{lo:.1}, {hi:.1}] dB",
        mel.source_id,
        mel.rows,
        mel.cols,
        mel.units.as_str()
    );

    let centers = center_frequencies(
        cfg.n_mels,
        cfg.fmin_hz,
        cfg.resolved_fmax(audio.sample_rate_hz),
    )?;
    println!(
        "band centers: {:.0} Hz, {:.0} Hz, ... {:.0} Hz",
        centers[0],
        centers[1],
        centers[centers.len() - 1]
    );

    // time-averaged level of a few bands
    for r in [0, mel.rows / 4, mel.rows / 2, mel.rows - 1] {
        let mean = (0..mel.cols).map(|c| mel.get(r, c) as f64).sum::<f64>() / mel.cols as f64;
        println!("  band {r:>3}: mean {mean:>6.1} dB");
    }

    if let Some(pgm) = args.next() {
        export_pgm(&mel, &pgm)?;
        println!("wrote {pgm}");
    }
    Ok(())
}
