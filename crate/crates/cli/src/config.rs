//! Run configuration: a single JSON document read by every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use statecoder_core::dataset::{SeriesDataset, SplitSpec};
use statecoder_core::embedding::{ClusterSpace, SvmOptions};
use statecoder_core::neural::ModelConfig;
use statecoder_core::synthplant::{default_compressor_spec, PlantSpec};
use statecoder_core::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub plant: Option<PlantSection>,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn default_train_fraction() -> f64 {
    0.7
}

/// Synthetic plant for `synth`: either the two-regime compressor preset or
/// a complete spec.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub length: usize,
    #[serde(default)]
    pub channels: Option<usize>,
    #[serde(default)]
    pub targets: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub spec: Option<PlantSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    #[serde(default = "yes")]
    pub has_header: bool,
    /// Columns fed to the encoder; all columns when absent.
    #[serde(default)]
    pub input_channels: Option<Vec<usize>>,
}

fn yes() -> bool {
    true
}

/// Model hyperparameters. Channel indices refer to dataset columns; the
/// input width follows from the data.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub output_channels: Vec<usize>,
    pub seq_len: usize,
    pub hidden: usize,
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
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            output_channels: m.output_channels,
            seq_len: m.seq_len,
            hidden: m.hidden,
            n_layers: m.n_layers,
            dropout_rate: m.dropout_rate,
            learning_rate: m.learning_rate,
            adam_beta1: m.adam_beta1,
            adam_beta2: m.adam_beta2,
            adam_epsilon: m.adam_epsilon,
            batch_size: m.batch_size,
            epochs: m.epochs,
            seed: m.seed,
            clip_norm: m.clip_norm,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub space: ClusterSpace,
    pub pca_components: usize,
    pub clusters: usize,
    pub gamma: f64,
    pub c: f64,
    pub seed: u64,
    pub grid_resolution: usize,
    pub heatmap_windows: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let svm = SvmOptions::default();
        Self {
            space: ClusterSpace::Pca2,
            pca_components: 2,
            clusters: 2,
            gamma: svm.gamma,
            c: svm.c,
            seed: 0,
            grid_resolution: 100,
            heatmap_windows: 8,
        }
    }
}

impl AnalysisSection {
    pub fn svm_options(&self) -> SvmOptions {
        SvmOptions {
            gamma: self.gamma,
            c: self.c,
            ..SvmOptions::default()
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Usage(format!("missing config: {}", path.display())));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.split()?;
        let a = &self.analysis;
        if a.clusters == 0 {
            return Err(Error::Config("analysis.clusters must be positive".into()));
        }
        if a.space == ClusterSpace::Pca2 && a.pca_components != 2 {
            return Err(Error::Config("the pca2 space needs pca_components = 2".into()));
        }
        if a.pca_components == 0 || a.grid_resolution == 0 || a.heatmap_windows == 0 {
            return Err(Error::Config(
                "pca_components, grid_resolution and heatmap_windows must be positive".into(),
            ));
        }
        if !(a.gamma > 0.0 && a.c > 0.0) {
            return Err(Error::Config("gamma and c must be positive".into()));
        }
        if let Some(p) = &self.plant {
            self.plant_spec_of(p)?;
        }
        Ok(())
    }

    pub fn split(&self) -> Result<SplitSpec> {
        SplitSpec::new(self.train_fraction).map_err(|_| {
            Error::Config(format!("train_fraction {} not in (0, 1)", self.train_fraction))
        })
    }

    pub fn plant_spec(&self) -> Result<(PlantSpec, usize)> {
        let p = self
            .plant
            .as_ref()
            .ok_or_else(|| Error::Config("config has no \"plant\" section".into()))?;
        Ok((self.plant_spec_of(p)?, p.length))
    }

    fn plant_spec_of(&self, p: &PlantSection) -> Result<PlantSpec> {
        if p.length < 2 {
            return Err(Error::Config("plant.length must be at least 2".into()));
        }
        let mut spec = match &p.spec {
            Some(spec) => {
                if p.channels.is_some() || p.targets.is_some() {
                    return Err(Error::Config(
                        "plant.spec excludes plant.channels and plant.targets".into(),
                    ));
                }
                spec.clone()
            }
            None => {
                let channels = p.channels.unwrap_or(20);
                let targets = p.targets.clone().unwrap_or_else(|| self.model.output_channels.clone());
                default_compressor_spec(channels, &targets, p.seed.unwrap_or(0))?
            }
        };
        if let Some(seed) = p.seed {
            spec.seed = seed;
        }
        if let Some(noise) = p.noise_std {
            spec.noise_std = noise;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn data(&self) -> Result<&DataSection> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::Config("config has no \"data\" section".into()))
    }

    /// Column indices fed to the encoder for a dataset of `n_columns`.
    pub fn input_channels(&self, n_columns: usize) -> Result<Vec<usize>> {
        let chosen = match self.data.as_ref().and_then(|d| d.input_channels.clone()) {
            Some(c) => c,
            None => (0..n_columns).collect(),
        };
        if let Some(&bad) = chosen.iter().find(|&&c| c >= n_columns) {
            return Err(Error::Config(format!(
                "input channel {bad} outside the {n_columns} dataset columns"
            )));
        }
        let mut sorted = chosen.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != chosen.len() || chosen.is_empty() {
            return Err(Error::Config("input_channels must be non-empty and distinct".into()));
        }
        Ok(chosen)
    }

    /// Full model config for `dataset`, with output channels remapped to
    /// positions within the selected inputs.
    pub fn model_config(&self, dataset: &SeriesDataset) -> Result<(ModelConfig, Vec<usize>)> {
        let inputs = self.input_channels(dataset.n_channels())?;
        let m = &self.model;
        let mut outputs = Vec::with_capacity(m.output_channels.len());
        for &c in &m.output_channels {
            let pos = inputs.iter().position(|&i| i == c).ok_or_else(|| {
                Error::Config(format!("output channel {c} is not among the input channels"))
            })?;
            outputs.push(pos);
        }
        let cfg = ModelConfig {
            input_dim: inputs.len(),
            output_dim: outputs.len(),
            seq_len: m.seq_len,
            hidden: m.hidden,
            n_layers: m.n_layers,
            dropout_rate: m.dropout_rate,
            learning_rate: m.learning_rate,
            adam_beta1: m.adam_beta1,
            adam_beta2: m.adam_beta2,
            adam_epsilon: m.adam_epsilon,
            batch_size: m.batch_size,
            epochs: m.epochs,
            seed: m.seed,
            clip_norm: m.clip_norm,
            output_channels: outputs,
        };
        cfg.validate()?;
        Ok((cfg, inputs))
    }
}
