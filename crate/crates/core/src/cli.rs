//! Command-line driver: `synth`, `featurize`, `train`, `score`, `evaluate`.
//!
//! Every subcommand accepts `--config <file>` with `key=value` lines naming
//! long flags (`n-fft=1024`); flags given on the command line win. Each run
//! appends one record to `manifest.txt` next to its outputs. The
//! `SPOOFGUARD_THREADS` environment variable caps the worker pool.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;

use crate::audio::read_wav;
use crate::data::{
    build_corpus, corpus_plan, format_scores, join_scores, label_counts, parse_protocol,
    read_scores, MissingPolicy, SynthConfig, Trial,
};
use crate::features::{
    decode_mels, encode_mels, extract_mel_spectrogram, pgm_bytes, FrontEndConfig, MelSpectrogram,
};
use crate::metrics::{evaluate, tdcf_constants, TdcfCosts, TdcfParams};
use crate::neuralnet::network::network_input;
use crate::neuralnet::{
    load_weights, load_weights_for, save_weights, train, AdamState, Dataset, NetworkConfig, Preset,
    ResNet, TrainRunConfig,
};

pub const THREADS_ENV: &str = "SPOOFGUARD_THREADS";
pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Parser)]
#[command(
    name = "spoofguard",
    version,
    about = "Replay and synthetic speech detection toolkit"
)]
pub struct Cli {
    /// File of key=value lines supplying flag defaults
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bona fide / replay corpus
    Synth(SynthArgs),
    /// Extract log-Mel spectrograms from WAV files
    Featurize(FeaturizeArgs),
    /// Train a residual network classifier
    Train(TrainArgs),
    /// Score every protocol utterance with trained weights
    Score(ScoreArgs),
    /// Compute EER and min normalized t-DCF from a score file
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total bona fide utterances over both splits
    #[arg(long, default_value_t = 50)]
    pub bonafide: usize,
    /// Total spoofed utterances over both splits
    #[arg(long, default_value_t = 50)]
    pub spoof: usize,
    /// Share of each class placed in the development split
    #[arg(long, default_value_t = 0.375)]
    pub dev_fraction: f64,
    #[arg(long, default_value_t = 10)]
    pub speakers: usize,
    #[arg(long, default_value_t = 16000)]
    pub sample_rate: u32,
    #[arg(long, default_value_t = 2.0)]
    pub min_duration: f64,
    #[arg(long, default_value_t = 4.0)]
    pub max_duration: f64,
    /// Output directory (receives wav/, train.txt, dev.txt)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct FeaturizeArgs {
    /// A WAV file or a directory of WAV files
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for <utt>.mels files
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2048)]
    pub n_fft: usize,
    #[arg(long, default_value_t = 512)]
    pub hop: usize,
    #[arg(long, default_value_t = 128)]
    pub n_mels: usize,
    #[arg(long, default_value_t = 0.0)]
    pub fmin: f64,
    /// Upper filterbank edge in Hz [default: sample_rate / 2]
    #[arg(long)]
    pub fmax: Option<f64>,
    #[arg(long, default_value_t = 224)]
    pub height: usize,
    #[arg(long, default_value_t = 224)]
    pub width: usize,
    #[arg(long, default_value_t = -80.0, allow_negative_numbers = true)]
    pub db_floor: f64,
    /// Also write a grayscale <utt>.pgm image per file
    #[arg(long, default_value_t = false)]
    pub pgm: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long)]
    pub protocol: PathBuf,
    /// Directory of <utt>.mels files
    #[arg(long)]
    pub features: PathBuf,
    /// Weight file to write; per-epoch losses go to the same path with a .loss extension
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "resnet34", value_parser = ["resnet34", "tiny"])]
    pub preset: String,
    /// 1 = grayscale, 3 = replicate the spectrogram into three channels
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub in_channels: u8,
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Adam learning rate [default: 1e-3, or 1e-6 with --fine-tune]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Start from existing weights instead of a fresh initialization
    #[arg(long, value_name = "SGW")]
    pub init: Option<PathBuf>,
    /// Use the fine-tuning learning rate
    #[arg(long, default_value_t = false)]
    pub fine_tune: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ScoreArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub protocol: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Score file of `<utt_id> <score>` lines
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub protocol: PathBuf,
    /// Also write the report here
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Protocol trials without a score: error or skip
    #[arg(long, default_value = "error", value_parser = ["error", "skip"])]
    pub missing: String,
    /// Explicit t-DCF weight on the miss rate (requires --c2)
    #[arg(long, requires = "c2")]
    pub c1: Option<f64>,
    /// Explicit t-DCF weight on the false-alarm rate (requires --c1)
    #[arg(long, requires = "c1")]
    pub c2: Option<f64>,
    #[arg(long, default_value_t = 0.9405)]
    pub p_target: f64,
    #[arg(long, default_value_t = 0.0095)]
    pub p_nontarget: f64,
    #[arg(long, default_value_t = 0.05)]
    pub p_spoof: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cmiss_asv: f64,
    #[arg(long, default_value_t = 10.0)]
    pub cfa_asv: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cmiss_cm: f64,
    #[arg(long, default_value_t = 10.0)]
    pub cfa_cm: f64,
    /// ASV miss rate for target trials
    #[arg(long, default_value_t = 0.0)]
    pub pmiss_asv: f64,
    /// ASV false-alarm rate for non-target trials
    #[arg(long, default_value_t = 0.0)]
    pub pfa_asv: f64,
    /// ASV miss rate for spoof trials
    #[arg(long, default_value_t = 0.0)]
    pub pmiss_spoof_asv: f64,
}

/// Entry point of the binary.
pub fn run() -> ExitCode {
    let cli = match parse_args(std::env::args_os()) {
        Ok(cli) => cli,
        Err(e) => match e.downcast::<clap::Error>() {
            Ok(ce) => ce.exit(),
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
        },
    };
    match configure_threads().and_then(|_| execute(&cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Parses arguments after splicing in any `--config` file.
pub fn parse_args<I, T>(args: I) -> Result<Cli>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = splice_config(args)?;
    Ok(Cli::try_parse_from(args)?)
}

fn splice_config(mut args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config = None;
    let mut sub_pos = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else if sub_pos.is_none() && !a.starts_with('-') {
            sub_pos = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(pos)) = (config, sub_pos) else {
        return Ok(args);
    };
    let sub_name = args[pos].to_string_lossy().into_owned();
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let mut injected: Vec<OsString> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), n + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key))
            .ok_or_else(|| {
                anyhow!(
                    "{}:{}: unknown key {key:?} for {sub_name}",
                    path.display(),
                    n + 1
                )
            })?;
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}").into());
            injected.push(value.into());
        } else {
            match value {
                "true" => injected.push(format!("--{key}").into()),
                "false" => {}
                _ => bail!("{}:{}: {key} expects true or false", path.display(), n + 1),
            }
        }
    }
    args.splice(pos + 1..pos + 1, injected);
    Ok(args)
}

/// Sizes the global pool from `SPOOFGUARD_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| anyhow!("{THREADS_ENV}={raw:?} must be a positive integer"))?;
    // a pool built earlier in the same process keeps its size
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn execute(cmd: &Command) -> Result<()> {
    let start = Instant::now();
    let mut manifest = match cmd {
        Command::Synth(a) => cmd_synth(a)?,
        Command::Featurize(a) => cmd_featurize(a)?,
        Command::Train(a) => cmd_train(a)?,
        Command::Score(a) => cmd_score(a)?,
        Command::Evaluate(a) => cmd_evaluate(a)?,
    };
    manifest.duration_s = start.elapsed().as_secs_f64();
    manifest.append()
}

/// One append-only record describing a completed run.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub config: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub duration_s: f64,
    /// Directory holding `manifest.txt`.
    pub dir: PathBuf,
}

impl RunManifest {
    fn new(command: &str, dir: &Path) -> Self {
        Self {
            command: command.into(),
            dir: dir.to_path_buf(),
            ..Self::default()
        }
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.into(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = String::from("[run]\n");
        writeln!(s, "command={}", self.command).unwrap();
        writeln!(s, "version={}", env!("CARGO_PKG_VERSION")).unwrap();
        if let Some(seed) = self.seed {
            writeln!(s, "seed={seed}").unwrap();
        }
        for (k, v) in &self.config {
            writeln!(s, "{k}={v}").unwrap();
        }
        for p in &self.inputs {
            writeln!(s, "input={}", p.display()).unwrap();
        }
        for p in &self.outputs {
            writeln!(s, "output={}", p.display()).unwrap();
        }
        writeln!(s, "duration_s={:.3}", self.duration_s).unwrap();
        s.push('\n');
        s
    }

    fn append(&self) -> Result<()> {
        let path = self.dir.join(MANIFEST_NAME);
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        f.write_all(self.render().as_bytes())
            .with_context(|| format!("writing {}", path.display()))
    }
}

/// Tracks files and directories created by a command and deletes them
/// unless the command completes.
#[derive(Default)]
struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn ensure_dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    fn ensure_parent(&mut self, file: &Path) -> Result<()> {
        match file.parent() {
            Some(p) if !p.as_os_str().is_empty() => self.ensure_dir(p),
            _ => Ok(()),
        }
    }

    fn track(&mut self, file: &Path) {
        self.files.push(file.to_path_buf());
    }

    /// Writes through a temporary sibling and renames into place.
    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        self.track(path);
        write_atomic(path, bytes)
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir_all(d);
        }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        anyhow!("renaming into {}: {e}", path.display())
    })
}

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<RunManifest> {
    let cfg = SynthConfig {
        seed: a.seed,
        n_bonafide: a.bonafide,
        n_spoof: a.spoof,
        dev_fraction: a.dev_fraction,
        speakers_per_split: a.speakers,
        sample_rate_hz: a.sample_rate,
        min_duration_s: a.min_duration,
        max_duration_s: a.max_duration,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    let mut out = Outputs::default();
    out.ensure_dir(&a.out)?;
    out.track(&a.out.join("train.txt"));
    out.track(&a.out.join("dev.txt"));
    for (_, _, t) in corpus_plan(&cfg) {
        out.track(&a.out.join("wav").join(format!("{}.wav", t.utt_id)));
    }
    if !a.out.join("wav").exists() {
        out.dirs.push(a.out.join("wav"));
    }
    let trials = build_corpus(&cfg, &a.out)?;
    out.commit();

    let (bona, spoof) = label_counts(&trials);
    let mut m = RunManifest::new("synth", &a.out);
    m.seed = Some(a.seed);
    m.set("bonafide", bona);
    m.set("spoof", spoof);
    m.set("dev_fraction", a.dev_fraction);
    m.set("speakers", a.speakers);
    m.set("sample_rate", a.sample_rate);
    m.set("min_duration", a.min_duration);
    m.set("max_duration", a.max_duration);
    m.outputs = vec![
        a.out.join("train.txt"),
        a.out.join("dev.txt"),
        a.out.join("wav"),
    ];
    eprintln!(
        "synth: wrote {} utterances to {}",
        trials.len(),
        a.out.display()
    );
    Ok(m)
}

fn wav_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .wav files in {}", input.display());
    }
    Ok(files)
}

fn cmd_featurize(a: &FeaturizeArgs) -> Result<RunManifest> {
    let cfg = FrontEndConfig {
        n_fft: a.n_fft,
        hop: a.hop,
        n_mels: a.n_mels,
        fmin_hz: a.fmin,
        fmax_hz: a.fmax,
        out_height: a.height,
        out_width: a.width,
        db_floor: a.db_floor,
    };
    let files = wav_inputs(&a.input)?;
    let mut out = Outputs::default();
    out.ensure_dir(&a.out)?;
    // bounded batches keep memory flat; writes stay in sorted order
    for chunk in files.chunks(64) {
        let encoded: Vec<Result<(String, Vec<u8>, Option<Vec<u8>>)>> = chunk
            .par_iter()
            .map(|path| {
                let audio = read_wav(path)?;
                let mel = extract_mel_spectrogram(&audio, &cfg)
                    .with_context(|| format!("featurizing {}", path.display()))?;
                let pgm = a.pgm.then(|| pgm_bytes(&mel));
                Ok((audio.source_id.clone(), encode_mels(&mel)?, pgm))
            })
            .collect();
        for item in encoded {
            let (id, mels, pgm) = item?;
            out.write(&a.out.join(format!("{id}.mels")), &mels)?;
            if let Some(p) = pgm {
                out.write(&a.out.join(format!("{id}.pgm")), &p)?;
            }
        }
    }
    out.commit();

    let mut m = RunManifest::new("featurize", &a.out);
    m.set("n_fft", a.n_fft);
    m.set("hop", a.hop);
    m.set("n_mels", a.n_mels);
    m.set("fmin", a.fmin);
    m.set(
        "fmax",
        a.fmax.map_or("nyquist".to_string(), |f| f.to_string()),
    );
    m.set("height", a.height);
    m.set("width", a.width);
    m.set("db_floor", a.db_floor);
    m.set("pgm", a.pgm);
    m.set("files", files.len());
    m.inputs = vec![a.input.clone()];
    m.outputs = vec![a.out.clone()];
    eprintln!("featurize: {} files -> {}", files.len(), a.out.display());
    Ok(m)
}

fn load_features(dir: &Path, trials: &[Trial]) -> Result<Vec<MelSpectrogram>> {
    trials
        .par_iter()
        .map(|t| {
            let path = dir.join(format!("{}.mels", t.utt_id));
            let bytes = fs::read(&path).with_context(|| {
                format!("missing features for {}: {}", t.utt_id, path.display())
            })?;
            decode_mels(&bytes).with_context(|| format!("decoding {}", path.display()))
        })
        .collect()
}

fn cmd_train(a: &TrainArgs) -> Result<RunManifest> {
    let preset: Preset = a.preset.parse()?;
    let cfg = NetworkConfig {
        in_channels: a.in_channels as usize,
        ..NetworkConfig::from_preset(preset)
    };
    cfg.validate()?;
    let lr = a.lr.unwrap_or(if a.fine_tune {
        AdamState::FINE_TUNE_LR
    } else {
        AdamState::FROM_SCRATCH_LR
    });
    let run = TrainRunConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        checkpoint: Some(a.out.clone()),
    };
    run.validate()?;
    let mut opt = AdamState::new(lr);
    opt.validate()?;

    let trials = parse_protocol(&a.protocol)?;
    let feats = load_features(&a.features, &trials)?;
    let mut data = Dataset::new(cfg.input_hw);
    for (t, mel) in trials.iter().zip(&feats) {
        let input = network_input(mel, cfg.input_hw).with_context(|| {
            format!(
                "preset {preset} needs {0}x{0} features (featurize --height {0} --width {0})",
                cfg.input_hw
            )
        })?;
        data.push(input, t.key.class_index())?;
    }

    let mut model: ResNet<f32> = match &a.init {
        Some(p) => load_weights_for(&cfg, p).with_context(|| format!("loading {}", p.display()))?,
        None => ResNet::new(&cfg, a.seed)?,
    };
    let mut out = Outputs::default();
    out.ensure_parent(&a.out)?;
    out.track(&a.out);
    let outcome = train(&mut model, &data, &run, &mut opt)?;
    save_weights(&model, &a.out)?;
    let loss_path = a.out.with_extension("loss");
    let mut text = String::new();
    for (i, l) in outcome.loss_history.iter().enumerate() {
        writeln!(text, "{} {:.6}", i + 1, l).unwrap();
    }
    out.write(&loss_path, text.as_bytes())?;
    out.commit();

    let (bona, spoof) = label_counts(&trials);
    let mut m = RunManifest::new("train", &parent_dir(&a.out));
    m.seed = Some(a.seed);
    m.set("preset", preset);
    m.set("in_channels", a.in_channels);
    m.set("epochs", a.epochs);
    m.set("batch", a.batch);
    m.set("lr", lr);
    m.set("bonafide", bona);
    m.set("spoof", spoof);
    m.set(
        "final_loss",
        format!(
            "{:.6}",
            outcome.loss_history.last().copied().unwrap_or(f64::NAN)
        ),
    );
    m.inputs = vec![a.protocol.clone(), a.features.clone()];
    m.inputs.extend(a.init.clone());
    m.outputs = vec![a.out.clone(), loss_path];
    eprintln!(
        "train: {} examples, losses {}",
        data.len(),
        outcome
            .loss_history
            .iter()
            .map(|l| format!("{l:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(m)
}

fn cmd_score(a: &ScoreArgs) -> Result<RunManifest> {
    let model =
        load_weights(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    let trials = parse_protocol(&a.protocol)?;
    let feats = load_features(&a.features, &trials)?;
    let scores: Vec<(String, f64)> = trials
        .par_iter()
        .zip(&feats)
        .map(|(t, mel)| {
            let s = model
                .score_utterance(mel)
                .with_context(|| format!("scoring {}", t.utt_id))?;
            Ok((t.utt_id.clone(), s))
        })
        .collect::<Result<_>>()?;
    let mut out = Outputs::default();
    out.ensure_parent(&a.out)?;
    out.write(&a.out, format_scores(&scores).as_bytes())?;
    out.commit();

    let mut m = RunManifest::new("score", &parent_dir(&a.out));
    m.set("preset", model.config().preset);
    m.set("trials", scores.len());
    m.inputs = vec![a.weights.clone(), a.protocol.clone(), a.features.clone()];
    m.outputs = vec![a.out.clone()];
    eprintln!("score: {} trials -> {}", scores.len(), a.out.display());
    Ok(m)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<RunManifest> {
    let costs = match (a.c1, a.c2) {
        (Some(c1), Some(c2)) => TdcfCosts::new(c1, c2),
        _ => tdcf_constants(&TdcfParams {
            prior_target: a.p_target,
            prior_nontarget: a.p_nontarget,
            prior_spoof: a.p_spoof,
            cost_miss_asv: a.cmiss_asv,
            cost_fa_asv: a.cfa_asv,
            cost_miss_cm: a.cmiss_cm,
            cost_fa_cm: a.cfa_cm,
            pmiss_asv: a.pmiss_asv,
            pfa_asv: a.pfa_asv,
            pmiss_spoof_asv: a.pmiss_spoof_asv,
        })?,
    };
    let policy = if a.missing == "skip" {
        MissingPolicy::Skip
    } else {
        MissingPolicy::Error
    };
    let trials = parse_protocol(&a.protocol)?;
    let entries = read_scores(&a.scores)?;
    let set = join_scores(&trials, &entries, policy)?;
    let report = evaluate(&set, &costs)?;
    let text = report.to_key_values();
    print!("{text}");
    let mut outputs = Vec::new();
    if let Some(path) = &a.out {
        let mut out = Outputs::default();
        out.ensure_parent(path)?;
        out.write(path, text.as_bytes())?;
        out.commit();
        outputs.push(path.clone());
    }

    let dir = parent_dir(a.out.as_deref().unwrap_or(&a.scores));
    let mut m = RunManifest::new("evaluate", &dir);
    m.set("c1", costs.c1);
    m.set("c2", costs.c2);
    m.set("missing", &a.missing);
    m.set("eer_percent", format!("{:.4}", report.eer.eer * 100.0));
    m.set("min_tdcf", format!("{:.6}", report.min_tdcf));
    m.inputs = vec![a.scores.clone(), a.protocol.clone()];
    m.outputs = outputs;
    Ok(m)
}
