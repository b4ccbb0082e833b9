//! SGW1 weight files.
//!
//! Layout (little-endian): magic `SGW1`, u32 version, u32 tensor count, then
//! per tensor a u16 name length, UTF-8 name, u8 rank, u32 dims and f32 data;
//! a trailing u32 CRC32 covers every preceding byte. The first tensor,
//! `config`, records the network configuration.

use std::fs;
use std::path::Path;

use super::network::{NetworkConfig, Preset, ResNet};
use super::tensor::{Real, Tensor};
use super::NetError;

pub const MAGIC: &[u8; 4] = b"SGW1";
pub const VERSION: u32 = 1;
const CONFIG_TENSOR: &str = "config";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

fn format_err(msg: impl Into<String>) -> NetError {
    NetError::Format(msg.into())
}

fn config_values(cfg: &NetworkConfig) -> Vec<f32> {
    let mut v = vec![
        cfg.preset.code() as f32,
        cfg.in_channels as f32,
        cfg.base_channels as f32,
        cfg.input_hw as f32,
    ];
    v.extend(cfg.stage_block_counts.iter().map(|&b| b as f32));
    v.push(cfg.num_classes as f32);
    v
}

fn config_from_values(v: &[f32]) -> Result<NetworkConfig, NetError> {
    if v.len() != 9 || v.iter().any(|x| x.fract() != 0.0 || *x < 0.0) {
        return Err(format_err(format!("malformed config tensor {v:?}")));
    }
    let u = |i: usize| v[i] as usize;
    let cfg = NetworkConfig {
        preset: Preset::from_code(v[0] as u32)
            .ok_or_else(|| format_err(format!("unknown preset code {}", v[0])))?,
        in_channels: u(1),
        base_channels: u(2),
        input_hw: u(3),
        stage_block_counts: [u(4), u(5), u(6), u(7)],
        num_classes: u(8),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Config tensor followed by every model tensor in visiting order.
pub fn model_tensors<T: Real>(model: &ResNet<T>) -> Vec<NamedTensor> {
    let cfg = config_values(model.config());
    let mut out = vec![NamedTensor {
        name: CONFIG_TENSOR.into(),
        shape: vec![cfg.len()],
        data: cfg,
    }];
    model.visit(&mut |name, t, _| {
        out.push(NamedTensor {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
        })
    });
    out
}

pub fn encode_tensors(tensors: &[NamedTensor]) -> Result<Vec<u8>, NetError> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    b.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let name_len = u16::try_from(t.name.len())
            .map_err(|_| format_err(format!("tensor name too long: {}", t.name)))?;
        let rank = u8::try_from(t.shape.len())
            .map_err(|_| format_err(format!("{}: rank {} too large", t.name, t.shape.len())))?;
        if t.shape.iter().product::<usize>() != t.data.len() {
            return Err(NetError::Shape(format!(
                "{}: shape/data length mismatch",
                t.name
            )));
        }
        b.extend_from_slice(&name_len.to_le_bytes());
        b.extend_from_slice(t.name.as_bytes());
        b.push(rank);
        for &d in &t.shape {
            let d =
                u32::try_from(d).map_err(|_| format_err(format!("{}: dim too large", t.name)))?;
            b.extend_from_slice(&d.to_le_bytes());
        }
        for v in &t.data {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_le_bytes());
    Ok(b)
}

pub fn encode_weights<T: Real>(model: &ResNet<T>) -> Result<Vec<u8>, NetError> {
    encode_tensors(&model_tensors(model))
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end
            .ok_or_else(|| format_err(format!("truncated at byte {} reading {what}", self.pos)))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<Vec<NamedTensor>, NetError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(format_err("bad magic (expected SGW1)"));
    }
    if bytes.len() < 16 {
        return Err(format_err(format!("truncated: {} bytes", bytes.len())));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let mut r = Reader { b: body, pos: 4 };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(format_err(format!(
            "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let count = r.u32("tensor count")? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let n = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(n, "name")?)
            .map_err(|_| format_err("tensor name is not UTF-8"))?
            .to_string();
        let rank = r.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = r.take(
            len.checked_mul(4)
                .ok_or_else(|| format_err("tensor too large"))?,
            &name,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(NamedTensor { name, shape, data });
    }
    if r.pos != body.len() {
        return Err(format_err(format!(
            "{} unexpected bytes after last tensor",
            body.len() - r.pos
        )));
    }
    Ok(out)
}

fn stored_config(tensors: &[NamedTensor]) -> Result<NetworkConfig, NetError> {
    match tensors.first() {
        Some(t) if t.name == CONFIG_TENSOR => config_from_values(&t.data),
        _ => Err(format_err("first tensor must be the network config")),
    }
}

/// Copies tensors into a network built from `cfg`, matching by name and
/// order. The first tensor whose name or shape disagrees is reported.
pub fn assign_tensors<T: Real>(
    cfg: &NetworkConfig,
    tensors: &[NamedTensor],
) -> Result<ResNet<T>, NetError> {
    let mut model = ResNet::new(cfg, 0)?;
    let mut it = tensors.iter().filter(|t| t.name != CONFIG_TENSOR);
    let mut err = None;
    model.visit_mut(&mut |name, t, _| {
        if err.is_some() {
            return;
        }
        match it.next() {
            None => err = Some(format_err(format!("missing tensor {name}"))),
            Some(src) if src.name != name => {
                err = Some(format_err(format!(
                    "expected tensor {name}, found {}",
                    src.name
                )))
            }
            Some(src) if src.shape != t.shape() => {
                err = Some(NetError::TensorMismatch {
                    name: name.to_string(),
                    expected: t.shape().to_vec(),
                    found: src.shape.clone(),
                })
            }
            Some(src) => {
                *t = Tensor::from_vec(
                    &src.shape,
                    src.data.iter().map(|&v| T::of(v as f64)).collect(),
                )
                .expect("shape checked");
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(extra) = it.next() {
        return Err(format_err(format!(
            "unexpected extra tensor {}",
            extra.name
        )));
    }
    Ok(model)
}

/// Writes via a temporary sibling so a failed write never leaves a partial file.
pub fn save_weights<T: Real>(model: &ResNet<T>, path: &Path) -> Result<(), NetError> {
    let bytes = encode_weights(model)?;
    let tmp = path.with_extension("sgw.tmp");
    let io = |e| NetError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    fs::write(&tmp, &bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

fn read(path: &Path) -> Result<Vec<NamedTensor>, NetError> {
    let bytes = fs::read(path).map_err(|e| NetError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    decode_weights(&bytes)
}

/// Loads a network using the configuration recorded in the file.
pub fn load_weights(path: &Path) -> Result<ResNet<f32>, NetError> {
    let tensors = read(path)?;
    assign_tensors(&stored_config(&tensors)?, &tensors)
}

/// Loads into an explicitly chosen configuration, e.g. external weights.
pub fn load_weights_for(cfg: &NetworkConfig, path: &Path) -> Result<ResNet<f32>, NetError> {
    assign_tensors(cfg, &read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ResNet<f32> {
        ResNet::new(&NetworkConfig::tiny(), seed).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = tiny(5);
        let bytes = encode_weights(&model).unwrap();
        let tensors = decode_weights(&bytes).unwrap();
        let back: ResNet<f32> =
            assign_tensors(&stored_config(&tensors).unwrap(), &tensors).unwrap();
        assert_eq!(model_tensors(&back), model_tensors(&model));
        assert_eq!(encode_weights(&back).unwrap(), bytes);
        assert_eq!(encode_tensors(&tensors).unwrap(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sgw");
        let model = tiny(6);
        save_weights(&model, &path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.config(), model.config());
        assert_eq!(back.stem_conv.weight, model.stem_conv.weight);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn corruption_detected() {
        let bytes = encode_weights(&tiny(7)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_weights(&bad), Err(NetError::Format(m)) if m.contains("magic")));
        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0x40;
        assert!(matches!(decode_weights(&bad), Err(NetError::Format(m)) if m.contains("CRC")));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_weights(&bad), Err(NetError::Format(m)) if m.contains("version")));
        assert!(decode_weights(&bytes[..10]).is_err());
    }

    #[test]
    fn tiny_into_resnet34_names_first_tensor() {
        let tensors = model_tensors(&tiny(8));
        match assign_tensors::<f32>(&NetworkConfig::resnet34(), &tensors) {
            Err(NetError::TensorMismatch {
                name,
                expected,
                found,
            }) => {
                assert_eq!(name, "stem.conv.weight");
                assert_eq!(expected, vec![64, 1, 7, 7]);
                assert_eq!(found, vec![8, 1, 7, 7]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
