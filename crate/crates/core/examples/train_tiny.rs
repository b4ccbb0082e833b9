//! Train the tiny residual network on a synthetic corpus entirely in memory
//! and report development-set EER.
//!
//!     cargo run --release --example train_tiny

use std::time::Instant;

use spoofguard::data::{corpus_plan, synth_utterance, Split, SynthConfig};
use spoofguard::neuralnet::network::network_input;
use spoofguard::neuralnet::{train, AdamState, Dataset, NetworkConfig, ResNet, TrainRunConfig};
use spoofguard::{compute_eer, extract_mel_spectrogram, FrontEndConfig, ScoreSet};

fn main() -> anyhow::Result<()> {
    let start = Instant::now();
    let synth = SynthConfig {
        seed: 7,
        n_bonafide: 80,
        n_spoof: 80,
        ..SynthConfig::default()
    };
    let net_cfg = NetworkConfig::tiny();
    let front = FrontEndConfig {
        out_height: net_cfg.input_hw,
        out_width: net_cfg.input_hw,
        ..FrontEndConfig::default()
    };

    let mut train_set = Dataset::new(net_cfg.input_hw);
    let mut dev = Vec::new();
    for (split, index, trial) in corpus_plan(&synth) {
        let audio = synth_utterance(&synth, index, trial.key)?;
        let mel = extract_mel_spectrogram(&audio, &front)?;
        let input = network_input::<f32>(&mel, net_cfg.input_hw)?;
        match split {
            Split::Train => train_set.push(input, trial.key.class_index())?,
            Split::Dev => dev.push((input, trial.key.class_index())),
        }
    }
    println!(
        "features for {} train / {} dev utterances in {:.1?}",
        train_set.len(),
        dev.len(),
        start.elapsed()
    );

    let mut model = ResNet::<f32>::new(&net_cfg, 7)?;
    let run = TrainRunConfig {
        seed: 7,
        ..TrainRunConfig::default()
    };
    let outcome = train(&mut model, &train_set, &run, &mut AdamState::default())?;
    for (epoch, loss) in outcome.loss_history.iter().enumerate() {
        println!("epoch {}: loss {loss:.4}", epoch + 1);
    }

    let mut scores = ScoreSet::default();
    for (input, label) in &dev {
        let hw = net_cfg.input_hw;
        let x = spoofguard::neuralnet::Tensor::from_vec(&[1, 1, hw, hw], input.clone())?;
        let s = model.score_batch(&x)?[0];
        if *label == 1 {
            scores.bonafide.push(s);
        } else {
            scores.spoof.push(s);
        }
    }
    let eer = compute_eer(&scores)?;
    println!(
        "dev EER {:.4}% (threshold {:.3}), total {:.1?}",
        eer.eer * 100.0,
        eer.threshold,
        start.elapsed()
    );
    Ok(())
}
