//! Central finite-difference oracle for the BPTT gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statecoder_core::dataset::WindowSample;
use statecoder_core::neural::{backward, AutoencoderParams, Dropout, ModelConfig};

pub const STEP: f64 = 1e-5;

pub fn setup(seed: u64) -> (ModelConfig, AutoencoderParams, WindowSample, Array2<f64>) {
    let cfg = ModelConfig {
        n_layers: 2,
        ..ModelConfig::new(4, vec![1, 3], 5, 8)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = AutoencoderParams::init(&cfg, &mut rng);
    // move forget biases off their constant init so every entry is generic
    params.scale(1.3);
    let window = WindowSample {
        values: Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.5..1.5)),
        start_index: 0,
    };
    let target = window.select_channels(&cfg.output_channels).unwrap().values;
    (cfg, params, window, target)
}

pub fn loss_at(params: &AutoencoderParams, window: &WindowSample, target: &Array2<f64>, dropout_seed: Option<u64>) -> f64 {
    match dropout_seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut d = Dropout { rate: 0.4, rng: &mut rng };
            backward(params, window, target, Some(&mut d)).unwrap().0
        }
        None => {
            let out = statecoder_core::neural::reconstruct(params, window).unwrap();
            statecoder_core::neural::mse_loss(&out, target).unwrap()
        }
    }
}

/// Worst relative error over every scalar parameter.
pub fn worst_relative_error(seed: u64, dropout_seed: Option<u64>) -> (f64, String) {
    let (_, params, window, target) = setup(seed);
    let analytic = match dropout_seed {
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let mut d = Dropout { rate: 0.4, rng: &mut rng };
            backward(&params, &window, &target, Some(&mut d)).unwrap().1
        }
        None => backward(&params, &window, &target, None).unwrap().1,
    };
    let analytic: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.to_vec()))
        .collect();

    let mut worst = (0.0, String::new());
    let n_tensors = analytic.len();
    for ti in 0..n_tensors {
        let len = analytic[ti].1.len();
        for j in 0..len {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].1[j] += STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].1[j] -= STEP;
            let numeric = (loss_at(&plus, &window, &target, dropout_seed)
                - loss_at(&minus, &window, &target, dropout_seed))
                / (2.0 * STEP);
            let a = analytic[ti].1[j];
            // absolute floor keeps roundoff on vanishing gradients from
            // dominating the ratio
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (rel, format!("{}[{j}] analytic {a:e} numeric {numeric:e}", analytic[ti].0));
            }
        }
    }
    worst
}

