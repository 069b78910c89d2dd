//! Central finite-difference checks of the BPTT gradients.

mod common;

use common::{loss_at, setup, worst_relative_error};
use statecoder_core::neural::backward;

#[test]
fn bptt_matches_finite_differences() {
    for seed in 0..3 {
        let (rel, at) = worst_relative_error(seed, None);
        assert!(rel < 1e-4, "seed {seed}: {rel:e} at {at}");
    }
}

#[test]
fn bptt_matches_finite_differences_under_fixed_dropout_masks() {
    let (rel, at) = worst_relative_error(7, Some(99));
    assert!(rel < 1e-4, "{rel:e} at {at}");
}

#[test]
fn plain_gradient_descent_decreases_loss() {
    let (_, mut params, window, target) = setup(4);
    let mut last = loss_at(&params, &window, &target, None);
    for _ in 0..10 {
        let (_, grads) = backward(&params, &window, &target, None).unwrap();
        let g: Vec<Vec<f64>> = grads.tensors().into_iter().map(|(_, t)| t.to_vec()).collect();
        for ((_, p), g) in params.tensors_mut().into_iter().zip(&g) {
            for (v, d) in p.iter_mut().zip(g) {
                *v -= 1e-4 * d;
            }
        }
        let now = loss_at(&params, &window, &target, None);
        assert!(now < last, "{now} !< {last}");
        last = now;
    }
}
