//! Waveform ingestion: RIFF/WAVE reading and writing, mono reduction and
//! peak normalization.

use std::fs;
use std::path::Path;

use thiserror::Error;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Fixed-point divisor for PCM16 samples.
pub const PCM16_SCALE: f32 = 32768.0;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic at offset {offset}: expected {expected:?}")]
    BadMagic {
        offset: usize,
        expected: &'static str,
    },
    #[error("unsupported encoding at offset {offset}: {detail}")]
    Unsupported { offset: usize, detail: String },
    #[error("truncated {what} at offset {offset}")]
    Truncated { offset: usize, what: &'static str },
    #[error("malformed file at offset {offset}: {detail}")]
    Malformed { offset: usize, detail: String },
    #[error("invalid audio buffer: {0}")]
    InvalidBuffer(String),
}

/// Mono waveform with its native sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate_hz: u32,
    pub source_id: String,
}

impl AudioBuffer {
    /// Builds a buffer after checking the range and finiteness invariants.
    pub fn new(
        samples: Vec<f32>,
        sample_rate_hz: u32,
        source_id: impl Into<String>,
    ) -> Result<Self, AudioError> {
        let buf = Self {
            samples,
            sample_rate_hz,
            source_id: source_id.into(),
        };
        buf.validate()?;
        Ok(buf)
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if self.samples.is_empty() {
            return Err(AudioError::InvalidBuffer("no samples".into()));
        }
        if self.sample_rate_hz == 0 {
            return Err(AudioError::InvalidBuffer("sample rate is zero".into()));
        }
        if let Some(i) = self
            .samples
            .iter()
            .position(|s| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(AudioError::InvalidBuffer(format!(
                "sample {i} = {} outside [-1, 1]",
                self.samples[i]
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
    offset: usize,
}

fn read_u16(bytes: &[u8], at: usize) -> Option<u16> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Reads a WAV file into a mono buffer. The utterance id is the file stem.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| AudioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_wav(&bytes, id)
}

/// Decodes RIFF/WAVE bytes (PCM16 or IEEE float32, one or two channels).
pub fn decode_wav(bytes: &[u8], source_id: impl Into<String>) -> Result<AudioBuffer, AudioError> {
    if bytes.len() < 12 {
        return Err(AudioError::Truncated {
            offset: bytes.len(),
            what: "RIFF header",
        });
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(AudioError::BadMagic {
            offset: 0,
            expected: "RIFF",
        });
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(AudioError::BadMagic {
            offset: 8,
            expected: "WAVE",
        });
    }

    let mut pos = 12;
    let mut format: Option<Format> = None;
    while pos < bytes.len() {
        let (id, size) = match (bytes.get(pos..pos + 4), read_u32(bytes, pos + 4)) {
            (Some(id), Some(size)) => (id, size as usize),
            _ => {
                return Err(AudioError::Truncated {
                    offset: pos,
                    what: "chunk header",
                })
            }
        };
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(AudioError::Truncated {
                        offset: body,
                        what: "fmt chunk",
                    });
                }
                let mut tag = read_u16(bytes, body).unwrap();
                if tag == FORMAT_EXTENSIBLE {
                    // The sub-format GUID starts with the real format tag.
                    tag = read_u16(bytes, body + 24).ok_or(AudioError::Truncated {
                        offset: body + 24,
                        what: "extensible fmt chunk",
                    })?;
                }
                format = Some(Format {
                    tag,
                    channels: read_u16(bytes, body + 2).unwrap(),
                    sample_rate: read_u32(bytes, body + 4).unwrap(),
                    bits: read_u16(bytes, body + 14).unwrap(),
                    offset: body,
                });
            }
            b"data" => {
                let fmt = format.as_ref().ok_or_else(|| AudioError::Malformed {
                    offset: pos,
                    detail: "data chunk before fmt chunk".into(),
                })?;
                if body + size > bytes.len() {
                    return Err(AudioError::Truncated {
                        offset: body,
                        what: "data chunk",
                    });
                }
                return decode_samples(fmt, &bytes[body..body + size], body, source_id.into());
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    Err(AudioError::Malformed {
        offset: pos.min(bytes.len()),
        detail: "no data chunk".into(),
    })
}

fn decode_samples(
    fmt: &Format,
    data: &[u8],
    data_offset: usize,
    source_id: String,
) -> Result<AudioBuffer, AudioError> {
    if fmt.channels == 0 || fmt.channels > 2 {
        return Err(AudioError::Unsupported {
            offset: fmt.offset + 2,
            detail: format!("{} channels", fmt.channels),
        });
    }
    if fmt.sample_rate == 0 {
        return Err(AudioError::Malformed {
            offset: fmt.offset + 4,
            detail: "sample rate is zero".into(),
        });
    }
    let channels = fmt.channels as usize;
    let interleaved: Vec<f32> = match (fmt.tag, fmt.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / PCM16_SCALE)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| {
                let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                if v.is_finite() {
                    v.clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect(),
        (tag, bits) => {
            return Err(AudioError::Unsupported {
                offset: fmt.offset,
                detail: format!("format tag {tag} with {bits} bits per sample"),
            })
        }
    };
    let frame_bytes = channels * fmt.bits as usize / 8;
    if !data.len().is_multiple_of(frame_bytes) {
        return Err(AudioError::Truncated {
            offset: data_offset + data.len() - data.len() % frame_bytes,
            what: "sample frame",
        });
    }
    if interleaved.is_empty() {
        return Err(AudioError::Truncated {
            offset: data_offset,
            what: "data chunk (no samples)",
        });
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|lr| (lr[0] + lr[1]) * 0.5)
            .collect()
    };
    Ok(AudioBuffer {
        samples,
        sample_rate_hz: fmt.sample_rate,
        source_id,
    })
}

/// Quantizes a sample to PCM16 with round-to-nearest and saturation.
pub fn quantize_pcm16(s: f32) -> i16 {
    (s * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a mono PCM16 WAV file image.
pub fn encode_wav_pcm16(buf: &AudioBuffer) -> Vec<u8> {
    let data_len = buf.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buf.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(buf.sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buf.samples {
        out.extend_from_slice(&quantize_pcm16(s).to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16(buf: &AudioBuffer, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    fs::write(path, encode_wav_pcm16(buf)).map_err(|source| AudioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Scales the buffer so its largest magnitude is exactly 1. Silence is
/// returned unchanged.
pub fn peak_normalize(buf: &AudioBuffer) -> AudioBuffer {
    let (peak_idx, peak) = buf
        .samples
        .iter()
        .enumerate()
        .fold((0, 0.0f32), |(bi, bp), (i, &s)| {
            if s.abs() > bp {
                (i, s.abs())
            } else {
                (bi, bp)
            }
        });
    let mut out = buf.clone();
    if peak > 0.0 {
        let gain = 1.0 / peak as f64;
        for s in out.samples.iter_mut() {
            *s = ((*s as f64) * gain).clamp(-1.0, 1.0) as f32;
        }
        out.samples[peak_idx] = buf.samples[peak_idx].signum();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(tag: u16, channels: u16, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data.len()) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&16000u32.to_le_bytes());
        let block = channels * bits / 8;
        out.extend_from_slice(&(16000 * block as u32).to_le_bytes());
        out.extend_from_slice(&block.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn single_zero_sample() {
        let buf = decode_wav(&wav_bytes(1, 1, 16, &0i16.to_le_bytes()), "x").unwrap();
        assert_eq!(buf.samples, vec![0.0]);
        assert_eq!(buf.sample_rate_hz, 16000);
    }

    #[test]
    fn pcm16_max_scales_by_32768() {
        let buf = decode_wav(&wav_bytes(1, 1, 16, &0x7FFFi16.to_le_bytes()), "x").unwrap();
        assert_eq!(buf.samples[0], 32767.0 / 32768.0);
    }

    #[test]
    fn stereo_is_averaged() {
        let mut data = Vec::new();
        data.extend_from_slice(&16384i16.to_le_bytes());
        data.extend_from_slice(&(-16384i16).to_le_bytes());
        let buf = decode_wav(&wav_bytes(1, 2, 16, &data), "x").unwrap();
        assert_eq!(buf.samples, vec![0.0]);
    }

    #[test]
    fn float32_is_clamped() {
        let mut data = Vec::new();
        data.extend_from_slice(&1.5f32.to_le_bytes());
        data.extend_from_slice(&(-0.25f32).to_le_bytes());
        let buf = decode_wav(&wav_bytes(3, 1, 32, &data), "x").unwrap();
        assert_eq!(buf.samples, vec![1.0, -0.25]);
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let base = wav_bytes(1, 1, 16, &1000i16.to_le_bytes());
        // Insert an odd-sized LIST chunk (with pad byte) between fmt and data.
        let mut bytes = base[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&base[36..]);
        let buf = decode_wav(&bytes, "x").unwrap();
        assert_eq!(buf.samples, vec![1000.0 / 32768.0]);
    }

    #[test]
    fn errors_carry_offsets() {
        let mut bytes = wav_bytes(1, 1, 16, &[0, 0]);
        bytes[8] = b'X';
        assert!(matches!(
            decode_wav(&bytes, "x"),
            Err(AudioError::BadMagic { offset: 8, .. })
        ));

        let bytes = wav_bytes(1, 1, 8, &[0, 0]);
        assert!(matches!(
            decode_wav(&bytes, "x"),
            Err(AudioError::Unsupported { offset: 20, .. })
        ));

        let mut bytes = wav_bytes(1, 1, 16, &[0, 0, 0, 0]);
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(
            decode_wav(&bytes, "x"),
            Err(AudioError::Truncated { offset: 44, .. })
        ));

        // data chunk ahead of fmt
        let base = wav_bytes(1, 1, 16, &[0, 0]);
        let mut bytes = base[..12].to_vec();
        bytes.extend_from_slice(&base[36..]);
        bytes.extend_from_slice(&base[12..36]);
        assert!(matches!(
            decode_wav(&bytes, "x"),
            Err(AudioError::Malformed { offset: 12, .. })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_wav("/nonexistent/none.wav"),
            Err(AudioError::Io { .. })
        ));
    }

    #[test]
    fn peak_normalize_examples() {
        let b = |s: Vec<f32>| AudioBuffer::new(s, 8000, "t").unwrap();
        assert_eq!(
            peak_normalize(&b(vec![0.5, -0.25])).samples,
            vec![1.0, -0.5]
        );
        assert_eq!(peak_normalize(&b(vec![0.0; 3])).samples, vec![0.0; 3]);
        assert_eq!(peak_normalize(&b(vec![-0.2])).samples, vec![-1.0]);
    }

    #[test]
    fn buffer_invariants_enforced() {
        assert!(AudioBuffer::new(vec![], 8000, "e").is_err());
        assert!(AudioBuffer::new(vec![0.0], 0, "e").is_err());
        assert!(AudioBuffer::new(vec![1.5], 8000, "e").is_err());
        assert!(AudioBuffer::new(vec![f32::NAN], 8000, "e").is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn pcm16_round_trip(samples in proptest::collection::vec(-1.0f32..=1.0, 1..200)) {
                let buf = AudioBuffer::new(samples, 22050, "p").unwrap();
                let back = decode_wav(&encode_wav_pcm16(&buf), "p").unwrap();
                prop_assert_eq!(back.sample_rate_hz, 22050);
                for (a, b) in buf.samples.iter().zip(&back.samples) {
                    prop_assert!((a - b).abs() <= 1.0 / 32768.0);
                    prop_assert!(b.is_finite());
                }
            }

            #[test]
            fn peak_normalize_idempotent(samples in proptest::collection::vec(-1.0f32..=1.0, 1..100)) {
                let buf = AudioBuffer::new(samples, 8000, "p").unwrap();
                let once = peak_normalize(&buf);
                let twice = peak_normalize(&once);
                prop_assert_eq!(&once.samples, &twice.samples);
            }
        }
    }
}
