//! write -> read -> write checks for every on-disk format.

use std::fs;
use std::path::Path;

use spoofguard::data::{
    format_scores, parse_protocol, parse_scores_str, read_scores, serialize_protocol,
    write_protocol, write_scores, Label, Trial,
};
use spoofguard::features::{decode_mels, encode_mels, read_mels, write_mels, FrontEndConfig};
use spoofguard::neuralnet::weights::{decode_weights, encode_tensors};
use spoofguard::neuralnet::{load_weights, save_weights, NetworkConfig, ResNet};
use spoofguard::{extract_mel_spectrogram, AudioBuffer};

pub type Check = Result<(), String>;

fn same(what: &str, a: &[u8], b: &[u8]) -> Check {
    if a == b {
        Ok(())
    } else {
        Err(format!(
            "{what}: second write differs ({} vs {} bytes)",
            a.len(),
            b.len()
        ))
    }
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

pub fn mels(dir: &Path) -> Check {
    let samples = (0..4000).map(|i| ((i as f32) * 0.05).sin() * 0.5).collect();
    let audio = AudioBuffer::new(samples, 16000, "tone").map_err(e)?;
    let cfg = FrontEndConfig {
        n_fft: 512,
        hop: 128,
        n_mels: 40,
        out_height: 40,
        out_width: 31,
        ..FrontEndConfig::default()
    };
    let spec = extract_mel_spectrogram(&audio, &cfg).map_err(e)?;
    let (p1, p2) = (dir.join("a.mels"), dir.join("b.mels"));
    write_mels(&spec, &p1).map_err(e)?;
    let back = read_mels(&p1).map_err(e)?;
    if back != spec {
        return Err("MELS: decoded spectrogram differs".into());
    }
    write_mels(&back, &p2).map_err(e)?;
    let first = fs::read(&p1).map_err(e)?;
    same("MELS", &first, &fs::read(&p2).map_err(e)?)?;
    let mut bad = first.clone();
    bad[1] = b'X';
    if decode_mels(&bad).is_ok() {
        return Err("MELS: corrupted magic accepted".into());
    }
    if decode_mels(&first[..first.len() - 3]).is_ok() {
        return Err("MELS: truncated file accepted".into());
    }
    same("MELS encode", &encode_mels(&back).map_err(e)?, &first)
}

pub fn sgw1(dir: &Path) -> Check {
    let model = ResNet::<f32>::new(&NetworkConfig::tiny(), 17).map_err(e)?;
    let (p1, p2) = (dir.join("a.sgw"), dir.join("b.sgw"));
    save_weights(&model, &p1).map_err(e)?;
    let back = load_weights(&p1).map_err(e)?;
    save_weights(&back, &p2).map_err(e)?;
    let first = fs::read(&p1).map_err(e)?;
    same("SGW1", &first, &fs::read(&p2).map_err(e)?)?;
    same(
        "SGW1 tensors",
        &encode_tensors(&decode_weights(&first).map_err(e)?).map_err(e)?,
        &first,
    )?;
    let mut bad = first.clone();
    bad[0] = b'T';
    match decode_weights(&bad) {
        Err(err) if err.to_string().contains("magic") => {}
        other => return Err(format!("SGW1: bad magic gave {other:?}")),
    }
    let mut bad = first.clone();
    let i = bad.len() / 3;
    bad[i] ^= 1;
    match decode_weights(&bad) {
        Err(err) if err.to_string().contains("CRC") => Ok(()),
        _ => Err("SGW1: flipped bit not caught by CRC".into()),
    }
}

pub fn protocol(dir: &Path) -> Check {
    let text = "LA_0079 LA_T_1138215 - - bonafide\nLA_0079 LA_T_1271820 - A01 spoof\nSG_X SG_D_0000002 RP R1 spoof\n";
    let trials = spoofguard::data::parse_protocol_str(text).map_err(e)?;
    if trials[0].key != Label::Bonafide || trials.len() != 3 {
        return Err("protocol: parsed wrong trials".into());
    }
    let (p1, p2) = (dir.join("a.txt"), dir.join("b.txt"));
    write_protocol(&trials, &p1).map_err(e)?;
    let back: Vec<Trial> = parse_protocol(&p1).map_err(e)?;
    write_protocol(&back, &p2).map_err(e)?;
    let first = fs::read(&p1).map_err(e)?;
    same("protocol", &first, &fs::read(&p2).map_err(e)?)?;
    same(
        "protocol text",
        serialize_protocol(&back).as_bytes(),
        text.as_bytes(),
    )
}

pub fn scores(dir: &Path) -> Check {
    let entries: Vec<(String, f64)> = (0..1000)
        .map(|i| (format!("utt{i:04}"), ((i as f64) * 0.731).sin() * 12.5))
        .collect();
    let (p1, p2) = (dir.join("a.scores"), dir.join("b.scores"));
    write_scores(&entries, &p1).map_err(e)?;
    let back = read_scores(&p1).map_err(e)?;
    for ((a, x), (b, y)) in entries.iter().zip(&back) {
        if a != b || (x - y).abs() > 5e-7 {
            return Err(format!("scores: {a} {x} read back as {b} {y}"));
        }
    }
    write_scores(&back, &p2).map_err(e)?;
    let first = fs::read(&p1).map_err(e)?;
    same("scores", &first, &fs::read(&p2).map_err(e)?)?;
    let reparsed = parse_scores_str(&format_scores(&back)).map_err(e)?;
    if reparsed != back {
        return Err("scores: text round trip changed values".into());
    }
    Ok(())
}
