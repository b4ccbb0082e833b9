//! A residual block computes ReLU(F(x) + x). With the residual path F zeroed
//! the block is exactly ReLU, and gradients reach the input through the
//! shortcut.
//!
//!     cargo run --example residual_block

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spoofguard::neuralnet::{ops, BasicBlock, NetworkConfig, ResNet, Tensor};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::<f32>::from_f64(
        &[1, 2, 3, 3],
        &(0..18).map(|i| (i as f64 - 9.0) / 4.0).collect::<Vec<_>>(),
    )?;

    let mut block = BasicBlock::<f32>::new(2, 2, false, &mut rng)?;
    block.zero_residual();
    let y = block.forward_train(&x)?;
    println!("zero residual path, y == relu(x): {}", y == ops::relu(&x));
    let dx = block.backward(&Tensor::from_f64(y.shape(), &vec![1.0; y.len()])?)?;
    println!("input gradient (ones upstream): {:?}", dx.data());

    let mut down = BasicBlock::<f32>::new(2, 4, true, &mut rng)?;
    let big = Tensor::<f32>::zeros(&[1, 2, 8, 8]);
    println!(
        "downsampling block: {:?} -> {:?}",
        big.shape(),
        down.forward_train(&big)?.shape()
    );

    for cfg in [NetworkConfig::resnet34(), NetworkConfig::tiny()] {
        let net = ResNet::<f32>::new(&cfg, 0)?;
        println!(
            "{}: blocks {:?}, {} weighted layers, {} parameters, input {}x{}",
            cfg.preset,
            cfg.stage_block_counts,
            net.weighted_layer_count(),
            net.parameter_count(),
            cfg.input_hw,
            cfg.input_hw
        );
    }
    Ok(())
}
