use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the auto-encoder and its training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Input channels per time step (P).
    pub input_dim: usize,
    /// Reconstructed channels per time step (K).
    pub output_dim: usize,
    /// Window length (T).
    pub seq_len: usize,
    /// Width of every LSTM layer and of the context vector (H).
    pub hidden: usize,
    /// Layers in the encoder; the decoder has the same count.
    pub n_layers: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    /// Input-column indices the decoder reconstructs, length `output_dim`.
    pub output_channels: Vec<usize>,
}

impl Default for ModelConfig {
    /// The full-scale reference setup: 158 sensors in, 6 pressures out,
    /// 36-step windows, 3+3 layers of 400 LSTM units, 0.4 dropout.
    fn default() -> Self {
        Self {
            input_dim: 158,
            output_dim: 6,
            seq_len: 36,
            hidden: 400,
            n_layers: 3,
            dropout_rate: 0.4,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            clip_norm: Some(5.0),
            output_channels: (0..6).collect(),
        }
    }
}

impl ModelConfig {
    /// A config with `hidden`-wide layers that reconstructs `output_channels`
    /// out of `input_dim` inputs, other knobs at their defaults.
    pub fn new(input_dim: usize, output_channels: Vec<usize>, seq_len: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            output_dim: output_channels.len(),
            seq_len,
            hidden,
            output_channels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 || self.output_dim == 0 || self.seq_len == 0 || self.hidden == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.n_layers == 0 {
            return bad("n_layers must be positive".into());
        }
        if self.output_dim > self.input_dim {
            return bad(format!(
                "output_dim {} exceeds input_dim {}",
                self.output_dim, self.input_dim
            ));
        }
        if self.output_channels.len() != self.output_dim {
            return bad(format!(
                "{} output channels listed for output_dim {}",
                self.output_channels.len(),
                self.output_dim
            ));
        }
        if let Some(&c) = self.output_channels.iter().find(|&&c| c >= self.input_dim) {
            return bad(format!("output channel {c} outside input range"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} not in [0, 1)", self.dropout_rate));
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(beta > 0.0 && beta < 1.0) {
                return bad(format!("{name} {beta} not in (0, 1)"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip_norm must be positive".into());
            }
        }
        Ok(())
    }
}

/// Input values per window over context width, `P * T / H`.
pub fn compression_ratio(config: &ModelConfig) -> f64 {
    (config.input_dim * config.seq_len) as f64 / config.hidden as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: usize, t: usize, h: usize) -> ModelConfig {
        ModelConfig {
            input_dim: p,
            seq_len: t,
            hidden: h,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn reference_compression_ratio() {
        assert!((compression_ratio(&cfg(158, 36, 400)) - 14.22).abs() < 0.005);
    }

    #[test]
    fn small_compression_ratios() {
        assert_eq!(compression_ratio(&cfg(7, 1, 7)), 1.0);
        assert_eq!(compression_ratio(&cfg(20, 20, 32)), 12.5);
    }

    #[test]
    fn default_is_reference_setup() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(
            (c.input_dim, c.output_dim, c.seq_len, c.hidden, c.n_layers),
            (158, 6, 36, 400, 3)
        );
        assert_eq!(c.dropout_rate, 0.4);
    }

    #[test]
    fn partial_reconstruction_bound_enforced() {
        let mut c = ModelConfig::new(2, vec![0, 1], 5, 4);
        c.validate().unwrap();
        c.output_dim = 3;
        c.output_channels = vec![0, 1, 1];
        assert!(c.validate().is_err());
        let c = ModelConfig::new(4, vec![4], 5, 4);
        assert!(c.validate().is_err());
    }
}
