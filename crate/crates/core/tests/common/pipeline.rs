//! Drives the `spoofguard` binary through synth -> featurize -> train ->
//! score -> evaluate.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

pub const BIN: &str = env!("CARGO_BIN_EXE_spoofguard");

pub fn spoofguard(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn spoofguard")
}

fn checked(dir: &Path, args: &[&str]) -> Result<Output, String> {
    let out = spoofguard(dir, args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`spoofguard {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

#[derive(Debug)]
pub struct PipelineRun {
    pub dir: PathBuf,
    pub report: BTreeMap<String, String>,
    pub elapsed: Duration,
}

impl PipelineRun {
    pub fn eer_percent(&self) -> f64 {
        self.report["eer"].parse().unwrap()
    }
}

/// The desk-scale run: 100 training and 60 development utterances, 64x64
/// features, tiny network, default training schedule.
pub fn desk_scale(dir: &Path, seed: u64) -> Result<PipelineRun, String> {
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let seed = seed.to_string();
    let start = Instant::now();
    checked(
        dir,
        &[
            "synth",
            "--seed",
            &seed,
            "--bonafide",
            "80",
            "--spoof",
            "80",
            "--out",
            "corpus",
        ],
    )?;
    checked(
        dir,
        &[
            "featurize",
            "--input",
            "corpus/wav",
            "--out",
            "feats",
            "--height",
            "64",
            "--width",
            "64",
        ],
    )?;
    checked(
        dir,
        &[
            "train",
            "--protocol",
            "corpus/train.txt",
            "--features",
            "feats",
            "--out",
            "model/tiny.sgw",
            "--preset",
            "tiny",
            "--seed",
            &seed,
        ],
    )?;
    checked(
        dir,
        &[
            "score",
            "--weights",
            "model/tiny.sgw",
            "--protocol",
            "corpus/dev.txt",
            "--features",
            "feats",
            "--out",
            "scores/dev.txt",
        ],
    )?;
    let out = checked(
        dir,
        &[
            "evaluate",
            "--scores",
            "scores/dev.txt",
            "--protocol",
            "corpus/dev.txt",
        ],
    )?;
    let elapsed = start.elapsed();
    let report = String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Ok(PipelineRun {
        dir: dir.to_path_buf(),
        report,
        elapsed,
    })
}

/// Relative paths of all files under `root` except manifests.
pub fn artifact_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "manifest.txt") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// First artifact that differs between two run directories, if any.
pub fn first_difference(a: &Path, b: &Path) -> Option<String> {
    let (fa, fb) = (artifact_files(a), artifact_files(b));
    if fa != fb {
        return Some(format!(
            "file sets differ ({} vs {} files)",
            fa.len(),
            fb.len()
        ));
    }
    fa.iter()
        .find(|rel| fs::read(a.join(rel)).ok() != fs::read(b.join(rel)).ok())
        .map(|rel| rel.display().to_string())
}
