//! "MELS v1" feature files and 8-bit PGM export.
//!
//! MELS layout (little-endian): magic `MELS`, u32 version, u32 rows,
//! u32 cols, rows*cols f32 row-major, u32 metadata length, then UTF-8
//! `key=value` lines.

use std::fs;
use std::path::Path;

use super::{FeatureError, FrontEndConfig, MelSpectrogram, Units};

const MAGIC: &[u8; 4] = b"MELS";
const VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn metadata(spec: &MelSpectrogram) -> String {
    let c = &spec.config;
    let fmax = c.resolved_fmax(spec.sample_rate_hz);
    [
        ("source_id", spec.source_id.clone()),
        ("sample_rate_hz", spec.sample_rate_hz.to_string()),
        ("units", spec.units.as_str().to_string()),
        ("n_fft", c.n_fft.to_string()),
        ("hop", c.hop.to_string()),
        ("n_mels", c.n_mels.to_string()),
        ("fmin_hz", c.fmin_hz.to_string()),
        ("fmax_hz", fmax.to_string()),
        ("out_height", c.out_height.to_string()),
        ("out_width", c.out_width.to_string()),
        ("db_floor", c.db_floor.to_string()),
    ]
    .iter()
    .map(|(k, v)| format!("{k}={v}\n"))
    .collect()
}

pub fn encode_mels(spec: &MelSpectrogram) -> Result<Vec<u8>, FeatureError> {
    if spec.values.len() != spec.rows * spec.cols {
        return Err(FeatureError::Format(format!(
            "{} values for a {}x{} grid",
            spec.values.len(),
            spec.rows,
            spec.cols
        )));
    }
    if spec.source_id.contains(['\n', '=']) {
        return Err(FeatureError::Format(format!(
            "source id {:?} contains a reserved character",
            spec.source_id
        )));
    }
    let meta = metadata(spec);
    let mut out = Vec::with_capacity(20 + spec.values.len() * 4 + meta.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.rows as u32).to_le_bytes());
    out.extend_from_slice(&(spec.cols as u32).to_le_bytes());
    for v in &spec.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FeatureError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(FeatureError::Format(format!(
                "truncated {what} at offset {}",
                self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32, FeatureError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_mels(bytes: &[u8]) -> Result<MelSpectrogram, FeatureError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(FeatureError::Format("bad magic, expected MELS".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(FeatureError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let rows = cur.u32("rows")? as usize;
    let cols = cur.u32("cols")? as usize;
    let n = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FeatureError::Format("grid size overflows".into()))?;
    let values = cur
        .take(n, "values")?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let meta_len = cur.u32("metadata length")? as usize;
    let meta = std::str::from_utf8(cur.take(meta_len, "metadata")?)
        .map_err(|_| FeatureError::Format("metadata is not UTF-8".into()))?;
    if cur.pos != bytes.len() {
        return Err(FeatureError::Format(format!(
            "{} trailing bytes after metadata",
            bytes.len() - cur.pos
        )));
    }

    let mut fields = std::collections::HashMap::new();
    for line in meta.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| FeatureError::Format(format!("metadata line {line:?} lacks '='")))?;
        fields.insert(k, v);
    }
    let field = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| FeatureError::Format(format!("metadata key {k} missing")))
    };
    fn parse<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, FeatureError> {
        v.parse()
            .map_err(|_| FeatureError::Format(format!("metadata {k}={v} unparsable")))
    }
    let units = match field("units")? {
        "db" => Units::Decibel,
        "power" => Units::Power,
        other => return Err(FeatureError::Format(format!("unknown units {other}"))),
    };
    let config = FrontEndConfig {
        n_fft: parse("n_fft", field("n_fft")?)?,
        hop: parse("hop", field("hop")?)?,
        n_mels: parse("n_mels", field("n_mels")?)?,
        fmin_hz: parse("fmin_hz", field("fmin_hz")?)?,
        fmax_hz: Some(parse("fmax_hz", field("fmax_hz")?)?),
        out_height: parse("out_height", field("out_height")?)?,
        out_width: parse("out_width", field("out_width")?)?,
        db_floor: parse("db_floor", field("db_floor")?)?,
    };
    Ok(MelSpectrogram {
        rows,
        cols,
        values,
        units,
        config,
        sample_rate_hz: parse("sample_rate_hz", field("sample_rate_hz")?)?,
        source_id: field("source_id")?.to_string(),
    })
}

pub fn write_mels(spec: &MelSpectrogram, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let path = path.as_ref();
    fs::write(path, encode_mels(spec)?).map_err(io_err(path))
}

pub fn read_mels(path: impl AsRef<Path>) -> Result<MelSpectrogram, FeatureError> {
    let path = path.as_ref();
    decode_mels(&fs::read(path).map_err(io_err(path))?)
}

/// Binary P5 image: pixel = round(255 (v - floor) / -floor), highest Mel
/// band on the top row.
pub fn pgm_bytes(spec: &MelSpectrogram) -> Vec<u8> {
    let floor = spec.config.db_floor;
    let mut out = format!("P5\n{} {}\n255\n", spec.cols, spec.rows).into_bytes();
    for r in (0..spec.rows).rev() {
        for c in 0..spec.cols {
            let v = spec.get(r, c) as f64;
            let level = (255.0 * (v - floor) / (0.0 - floor))
                .round()
                .clamp(0.0, 255.0);
            out.push(level as u8);
        }
    }
    out
}

pub fn export_pgm(spec: &MelSpectrogram, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    let path = path.as_ref();
    fs::write(path, pgm_bytes(spec)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(rows: usize, cols: usize, values: Vec<f32>) -> MelSpectrogram {
        MelSpectrogram {
            rows,
            cols,
            values,
            units: Units::Decibel,
            config: FrontEndConfig {
                fmax_hz: Some(8000.0),
                ..FrontEndConfig::default()
            },
            sample_rate_hz: 16000,
            source_id: "utt_1".into(),
        }
    }

    fn pixels(s: &MelSpectrogram) -> Vec<u8> {
        let bytes = pgm_bytes(s);
        let header = format!("P5\n{} {}\n255\n", s.cols, s.rows);
        assert!(bytes.starts_with(header.as_bytes()));
        bytes[header.len()..].to_vec()
    }

    #[test]
    fn pgm_quantization() {
        assert_eq!(pixels(&spec(2, 3, vec![0.0; 6])), vec![255; 6]);
        assert_eq!(pixels(&spec(2, 3, vec![-80.0; 6])), vec![0; 6]);
        // Row 0 is the lowest band, so it lands on the bottom image row.
        let s = spec(2, 2, vec![-80.0, -20.0, 0.0, -40.0]);
        assert_eq!(pixels(&s), vec![255, 128, 0, 191]);
    }

    #[test]
    fn mels_round_trip_bytes() {
        let s = spec(2, 3, vec![0.0, -1.5, -80.0, -3.25, f32::MIN_POSITIVE, -0.0]);
        let bytes = encode_mels(&s).unwrap();
        let back = decode_mels(&bytes).unwrap();
        assert_eq!(encode_mels(&back).unwrap(), bytes);
        assert_eq!(
            back.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            s.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn mels_rejects_corruption() {
        let bytes = encode_mels(&spec(1, 2, vec![0.0, -1.0])).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_mels(&bad).is_err());
        assert!(decode_mels(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_mels(&extra).is_err());
    }
}
