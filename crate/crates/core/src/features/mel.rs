//! Mel scale and triangular filterbank.

use super::{FeatureError, FrontEndConfig, Grid};

const MEL_FACTOR: f64 = 2595.0;
const MEL_BREAK_HZ: f64 = 700.0;

/// Mel = 2595 log10(1 + f / 700).
pub fn hz_to_mel(hz: f64) -> Result<f64, FeatureError> {
    if !(hz >= 0.0) || !hz.is_finite() {
        return Err(FeatureError::NegativeInput(hz));
    }
    Ok(MEL_FACTOR * (1.0 + hz / MEL_BREAK_HZ).log10())
}

/// Hz = 700 (10^(mel / 2595) - 1).
pub fn mel_to_hz(mel: f64) -> Result<f64, FeatureError> {
    if !(mel >= 0.0) || !mel.is_finite() {
        return Err(FeatureError::NegativeInput(mel));
    }
    Ok(MEL_BREAK_HZ * (10f64.powf(mel / MEL_FACTOR) - 1.0))
}

/// The n_mels + 2 break frequencies (Hz), equally spaced in Mel.
pub fn break_frequencies(
    n_mels: usize,
    fmin_hz: f64,
    fmax_hz: f64,
) -> Result<Vec<f64>, FeatureError> {
    let lo = hz_to_mel(fmin_hz)?;
    let hi = hz_to_mel(fmax_hz)?;
    let steps = (n_mels + 1) as f64;
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / steps))
        .collect()
}

/// Center frequency of each band (break k + 1 for filter k).
pub fn center_frequencies(
    n_mels: usize,
    fmin_hz: f64,
    fmax_hz: f64,
) -> Result<Vec<f64>, FeatureError> {
    let breaks = break_frequencies(n_mels, fmin_hz, fmax_hz)?;
    Ok(breaks[1..=n_mels].to_vec())
}

/// Weight of triangular filter `k` at frequency `hz`. Peaks at 1.0 on
/// break k + 1 and vanishes outside (break k, break k + 2).
pub fn triangle_weight(breaks: &[f64], k: usize, hz: f64) -> f64 {
    let (lo, center, hi) = (breaks[k], breaks[k + 1], breaks[k + 2]);
    if hz <= lo || hz >= hi {
        0.0
    } else if hz <= center {
        (hz - lo) / (center - lo)
    } else {
        (hi - hz) / (hi - center)
    }
}

/// Frequency in Hz of FFT bin `bin`.
pub fn bin_frequency(bin: usize, n_fft: usize, sample_rate_hz: u32) -> f64 {
    bin as f64 * sample_rate_hz as f64 / n_fft as f64
}

/// n_mels x (n_fft/2 + 1) matrix of unnormalized triangular filters.
pub fn mel_filterbank(cfg: &FrontEndConfig, sample_rate_hz: u32) -> Result<Grid, FeatureError> {
    cfg.validate(sample_rate_hz)?;
    let fmax = cfg.resolved_fmax(sample_rate_hz);
    let breaks = break_frequencies(cfg.n_mels, cfg.fmin_hz, fmax)?;
    let n_bins = cfg.n_fft / 2 + 1;
    let mut fb = Grid::zeros(cfg.n_mels, n_bins);
    for k in 0..cfg.n_mels {
        let row = fb.row_mut(k);
        for (bin, w) in row.iter_mut().enumerate() {
            *w = triangle_weight(&breaks, k, bin_frequency(bin, cfg.n_fft, sample_rate_hz));
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(FeatureError::EmptyFilter {
                band: k,
                n_mels: cfg.n_mels,
                n_fft: cfg.n_fft,
            });
        }
    }
    Ok(fb)
}
