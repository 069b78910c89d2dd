use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::forward::{batch_gradients, clip_global_norm, decoder_forward, encoder_forward, time_major, Dropout};
use super::{AutoencoderParams, ModelConfig};
use crate::dataset::WindowSample;
use crate::error::{Error, Result};

/// Per-epoch losses, measured with dropout disabled after each epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
    pub wall_time_secs: Vec<f64>,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.train_mse.len()
    }

    /// True when both loss curves agree bit for bit; wall times are ignored.
    pub fn same_losses(&self, other: &TrainReport) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        bits(&self.train_mse) == bits(&other.train_mse)
            && bits(&self.validation_mse) == bits(&other.validation_mse)
    }
}

fn check_windows(config: &ModelConfig, windows: &[WindowSample], what: &str) -> Result<()> {
    for w in windows {
        if w.len() != config.seq_len || w.n_channels() != config.input_dim {
            return Err(Error::usage(format!(
                "{what} window at {} is {}x{}, config expects {}x{}",
                w.start_index,
                w.len(),
                w.n_channels(),
                config.seq_len,
                config.input_dim
            )));
        }
    }
    Ok(())
}

/// Reconstruction MSE on the designated output channels, dropout disabled.
pub fn evaluate_mse(params: &AutoencoderParams, windows: &[WindowSample], output_channels: &[usize]) -> Result<f64> {
    const CHUNK: usize = 256;
    if windows.is_empty() {
        return Err(Error::usage("no windows to evaluate"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in windows.chunks(CHUNK) {
        let refs: Vec<_> = chunk.iter().collect();
        let inputs = time_major(&refs, None);
        let targets = time_major(&refs, Some(output_channels));
        let enc = encoder_forward(params, &inputs, None);
        let dec = decoder_forward(params, &enc.context, targets.len(), None);
        for (y, tgt) in dec.outputs.iter().zip(&targets) {
            sum += y.iter().zip(tgt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            count += y.len();
        }
    }
    Ok(sum / count as f64)
}

/// Trains from a seeded initialization. Deterministic in `config.seed`.
pub fn train(
    config: &ModelConfig,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
) -> Result<(AutoencoderParams, TrainReport)> {
    config.validate()?;
    if train_windows.is_empty() {
        return Err(Error::usage("training set is empty"));
    }
    if val_windows.is_empty() {
        return Err(Error::usage("validation set is empty"));
    }
    check_windows(config, train_windows, "training")?;
    check_windows(config, val_windows, "validation")?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = AutoencoderParams::init(config, &mut rng);
    let mut adam = AdamState::for_params(&params);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let refs: Vec<_> = batch.iter().map(|&i| &train_windows[i]).collect();
            let inputs = time_major(&refs, None);
            let targets = time_major(&refs, Some(&config.output_channels));
            let mut dropout = Dropout {
                rate: config.dropout_rate,
                rng: &mut rng,
            };
            let active = (config.dropout_rate > 0.0).then_some(&mut dropout);
            let (loss, mut grads) =
                batch_gradients(&params, &inputs, &targets, active).map_err(|e| diverged(epoch, e))?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("batch loss {loss}"),
                });
            }
            if let Some(max) = config.clip_norm {
                clip_global_norm(&mut grads, max);
            }
            adam_step(&mut adam, &mut params, &grads, config).map_err(|e| diverged(epoch, e))?;
        }

        let train_mse = evaluate_mse(&params, train_windows, &config.output_channels)?;
        let val_mse = evaluate_mse(&params, val_windows, &config.output_channels)?;
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(Error::Training {
                epoch,
                message: format!("train mse {train_mse}, validation mse {val_mse}"),
            });
        }
        report.train_mse.push(train_mse);
        report.validation_mse.push(val_mse);
        report.wall_time_secs.push(started.elapsed().as_secs_f64());
    }
    Ok((params, report))
}

fn diverged(epoch: usize, err: Error) -> Error {
    match err {
        Error::Numerical { param, message } => Error::Training {
            epoch,
            message: format!("{message} in `{param}`"),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    fn windows(n: usize, t: usize, p: usize, seed: u64) -> Vec<WindowSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| WindowSample {
                values: Array2::from_shape_fn((t, p), |_| rng.random_range(-1.0..1.0)),
                start_index: i,
            })
            .collect()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            n_layers: 1,
            epochs: 2,
            batch_size: 4,
            ..ModelConfig::new(3, vec![0, 2], 5, 4)
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = ModelConfig { epochs: 0, ..small_config() };
        let (params, report) = train(&cfg, &windows(6, 5, 3, 0), &windows(2, 5, 3, 1)).unwrap();
        let init = AutoencoderParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
        assert_eq!(params, init);
        assert_eq!(report.epochs(), 0);
    }

    #[test]
    fn same_seed_same_report() {
        let cfg = small_config();
        let (tr, va) = (windows(10, 5, 3, 0), windows(3, 5, 3, 1));
        let (pa, a) = train(&cfg, &tr, &va).unwrap();
        let (pb, b) = train(&cfg, &tr, &va).unwrap();
        assert!(a.same_losses(&b));
        assert_eq!(pa, pb);
        assert_eq!(a.epochs(), 2);
        assert!(a.train_mse.iter().chain(&a.validation_mse).all(|&m| m >= 0.0));
    }

    #[test]
    fn empty_training_set_is_usage_error() {
        let err = train(&small_config(), &[], &windows(2, 5, 3, 1)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn mismatched_window_shape_is_usage_error() {
        let err = train(&small_config(), &windows(3, 4, 3, 0), &windows(2, 5, 3, 1)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn divergence_names_epoch() {
        let cfg = ModelConfig {
            learning_rate: 1e300,
            clip_norm: None,
            ..small_config()
        };
        let err = train(&cfg, &windows(8, 5, 3, 0), &windows(2, 5, 3, 1)).unwrap_err();
        assert!(matches!(err, Error::Training { epoch: 1, .. }), "{err:?}");
    }

    #[test]
    fn evaluate_matches_per_window_reconstruction() {
        let cfg = small_config();
        let params = AutoencoderParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        let ws = windows(5, 5, 3, 3);
        let mut total = 0.0;
        for w in &ws {
            let out = crate::neural::reconstruct(&params, w).unwrap();
            let target = w.select_channels(&cfg.output_channels).unwrap().values;
            total += crate::neural::mse_loss(&out, &target).unwrap();
        }
        let batched = evaluate_mse(&params, &ws, &cfg.output_channels).unwrap();
        assert!((batched - total / 5.0).abs() < 1e-12);
    }
}
