mod common;

use common::{gradient_suite, randn, rng};
use spoofguard::neuralnet::ops;
use spoofguard::neuralnet::{BasicBlock, Tensor};

#[test]
fn every_layer_matches_finite_differences() {
    for (name, tol, case) in gradient_suite() {
        for seed in 0..20 {
            let err = case(seed);
            assert!(
                err <= tol,
                "{name} seed {seed}: relative error {err:e} > {tol:e}"
            );
        }
    }
}

#[test]
fn zero_residual_passes_gradient_through_shortcut() {
    let mut g = rng(42);
    let mut block = BasicBlock::<f64>::new(3, 3, false, &mut g).unwrap();
    block.zero_residual();
    let x = randn(&[2, 3, 4, 4], &mut g);
    let y = block.forward_train(&x).unwrap();
    assert_eq!(y, ops::relu(&x));
    let dy = randn(y.shape(), &mut g);
    let dx = block.backward(&dy).unwrap();
    let gated = ops::relu_backward(&x, &dy.to_f64());
    assert_eq!(dx.data(), &gated[..]);
}

#[test]
fn classifier_softmax_sums_to_one() {
    let mut g = rng(3);
    let logits: Tensor<f64> = randn(&[16, 2], &mut g);
    let p = ops::softmax(&logits).unwrap();
    for row in p.chunks(2) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
