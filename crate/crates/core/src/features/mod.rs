//! Decibel-scaled Mel-spectrogram front-end.
//!
//! The pipeline is frame -> periodic Hann window -> power spectrum ->
//! triangular Mel filterbank -> dB relative to the utterance maximum ->
//! center-aligned bilinear resize to a fixed grid.

pub mod fft;
mod io;
pub mod mel;

use std::f64::consts::PI;

use thiserror::Error;

use crate::audio::AudioBuffer;

pub use fft::{fft_power, FftPlan};
pub use io::{decode_mels, encode_mels, export_pgm, pgm_bytes, read_mels, write_mels};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz};

/// Power floor applied before taking logarithms.
pub const POWER_EPSILON: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("expected a non-negative value, got {0}")]
    NegativeInput(f64),
    #[error("window length {0} is too short (need at least 2)")]
    WindowTooShort(usize),
    #[error("FFT size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("frame length {got} does not match FFT size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid front-end configuration: {0}")]
    InvalidConfig(String),
    #[error("Mel band {band} has no nonzero weight ({n_mels} bands too many for n_fft={n_fft})")]
    EmptyFilter {
        band: usize,
        n_mels: usize,
        n_fft: usize,
    },
    #[error("negative power {value} at ({row}, {col})")]
    NegativePower { row: usize, col: usize, value: f64 },
    #[error("cannot resize an empty grid")]
    EmptyGrid,
    #[error("feature file: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Front-end parameters. `fmax_hz = None` means the Nyquist frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: Option<f64>,
    pub out_height: usize,
    pub out_width: usize,
    pub db_floor: f64,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop: 512,
            n_mels: 128,
            fmin_hz: 0.0,
            fmax_hz: None,
            out_height: 224,
            out_width: 224,
            db_floor: -80.0,
        }
    }
}

impl FrontEndConfig {
    pub fn resolved_fmax(&self, sample_rate_hz: u32) -> f64 {
        self.fmax_hz.unwrap_or(sample_rate_hz as f64 / 2.0)
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if self.n_fft < 2 || !self.n_fft.is_power_of_two() {
            return bad(format!("n_fft={} must be a power of two >= 2", self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return bad(format!(
                "hop={} must lie in (0, n_fft={}]",
                self.hop, self.n_fft
            ));
        }
        if self.n_mels < 2 {
            return bad(format!("n_mels={} must be >= 2", self.n_mels));
        }
        let nyquist = sample_rate_hz as f64 / 2.0;
        let fmax = self.resolved_fmax(sample_rate_hz);
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < fmax && fmax <= nyquist) {
            return bad(format!(
                "need 0 <= fmin ({}) < fmax ({fmax}) <= sample_rate/2 ({nyquist})",
                self.fmin_hz
            ));
        }
        if self.out_height == 0 || self.out_width == 0 {
            return bad("output dimensions must be positive".into());
        }
        if !(self.db_floor < 0.0) || !self.db_floor.is_finite() {
            return bad(format!("db_floor={} must be negative", self.db_floor));
        }
        Ok(())
    }
}

/// Dense row-major 2-D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Power,
    Decibel,
}

impl Units {
    pub fn as_str(self) -> &'static str {
        match self {
            Units::Power => "power",
            Units::Decibel => "db",
        }
    }
}

/// Time x frequency feature map. Rows are Mel bands (row 0 = lowest),
/// columns are time.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
    pub units: Units,
    pub config: FrontEndConfig,
    pub sample_rate_hz: u32,
    pub source_id: String,
}

impl MelSpectrogram {
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.cols + c]
    }

    pub fn to_grid(&self) -> Grid {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.values.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Periodic Hann window, w[i] = 0.5 (1 - cos(2 pi i / n)).
pub fn hann_window(n: usize) -> Result<Vec<f64>, FeatureError> {
    if n < 2 {
        return Err(FeatureError::WindowTooShort(n));
    }
    Ok((0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
        .collect())
}

/// Splits the signal into frames at offsets 0, hop, 2 hop, ... with every
/// frame fully inside the signal. Signals shorter than one frame are
/// zero-padded at the end.
pub fn frame_signal(buf: &AudioBuffer, n_fft: usize, hop: usize) -> Vec<Vec<f64>> {
    assert!(
        n_fft > 0 && hop > 0,
        "frame length and hop must be positive"
    );
    let x = &buf.samples;
    if x.len() < n_fft {
        let mut frame: Vec<f64> = x.iter().map(|&s| s as f64).collect();
        frame.resize(n_fft, 0.0);
        return vec![frame];
    }
    let count = 1 + (x.len() - n_fft) / hop;
    (0..count)
        .map(|f| {
            x[f * hop..f * hop + n_fft]
                .iter()
                .map(|&s| s as f64)
                .collect()
        })
        .collect()
}

/// 10 log10(max(S, eps) / max(S)) clamped below at `db_floor`. An all-zero
/// grid maps to `db_floor` everywhere.
pub fn power_to_db(power: &Grid, db_floor: f64) -> Result<Grid, FeatureError> {
    for (i, &v) in power.data.iter().enumerate() {
        if !(v >= 0.0) {
            return Err(FeatureError::NegativePower {
                row: i / power.cols.max(1),
                col: i % power.cols.max(1),
                value: v,
            });
        }
    }
    let peak = power.max();
    if !(peak > 0.0) {
        return Ok(Grid {
            rows: power.rows,
            cols: power.cols,
            data: vec![db_floor; power.data.len()],
        });
    }
    let reference = peak.max(POWER_EPSILON);
    let data = power
        .data
        .iter()
        .map(|&v| (10.0 * (v.max(POWER_EPSILON) / reference).log10()).max(db_floor))
        .collect();
    Ok(Grid {
        rows: power.rows,
        cols: power.cols,
        data,
    })
}

fn source_coord(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}

/// Center-aligned bilinear resize with edge clamping.
pub fn resize_bilinear(src: &Grid, out_h: usize, out_w: usize) -> Result<Grid, FeatureError> {
    if src.rows == 0 || src.cols == 0 || out_h == 0 || out_w == 0 {
        return Err(FeatureError::EmptyGrid);
    }
    let cols: Vec<_> = (0..out_w)
        .map(|j| source_coord(j, src.cols, out_w))
        .collect();
    let mut out = Grid::zeros(out_h, out_w);
    for i in 0..out_h {
        let (r0, r1, fy) = source_coord(i, src.rows, out_h);
        let (top, bottom) = (src.row(r0), src.row(r1));
        for (j, &(c0, c1, fx)) in cols.iter().enumerate() {
            let upper = top[c0] + (top[c1] - top[c0]) * fx;
            let lower = bottom[c0] + (bottom[c1] - bottom[c0]) * fx;
            out.data[i * out_w + j] = upper + (lower - upper) * fy;
        }
    }
    Ok(out)
}

/// Mel power spectrogram (n_mels x n_frames) before dB mapping and resize.
pub fn mel_power(buf: &AudioBuffer, cfg: &FrontEndConfig) -> Result<Grid, FeatureError> {
    cfg.validate(buf.sample_rate_hz)?;
    let fb = mel_filterbank(cfg, buf.sample_rate_hz)?;
    let window = hann_window(cfg.n_fft)?;
    let plan = FftPlan::new(cfg.n_fft)?;
    let frames = frame_signal(buf, cfg.n_fft, cfg.hop);
    let mut out = Grid::zeros(cfg.n_mels, frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let windowed: Vec<f64> = frame.iter().zip(&window).map(|(x, w)| x * w).collect();
        let spectrum = plan.power(&windowed)?;
        for m in 0..cfg.n_mels {
            let energy: f64 = fb.row(m).iter().zip(&spectrum).map(|(w, p)| w * p).sum();
            out.data[m * out.cols + t] = energy;
        }
    }
    Ok(out)
}

/// Full front-end: Mel power -> dB -> resize to (out_height, out_width).
pub fn extract_mel_spectrogram(
    buf: &AudioBuffer,
    cfg: &FrontEndConfig,
) -> Result<MelSpectrogram, FeatureError> {
    let power = mel_power(buf, cfg)?;
    let db = power_to_db(&power, cfg.db_floor)?;
    let resized = resize_bilinear(&db, cfg.out_height, cfg.out_width)?;
    let mut config = cfg.clone();
    config.fmax_hz = Some(cfg.resolved_fmax(buf.sample_rate_hz));
    Ok(MelSpectrogram {
        rows: resized.rows,
        cols: resized.cols,
        values: resized.data.iter().map(|&v| v as f32).collect(),
        units: Units::Decibel,
        config,
        sample_rate_hz: buf.sample_rate_hz,
        source_id: buf.source_id.clone(),
    })
}
