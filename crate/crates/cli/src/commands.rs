use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statecoder_core::dataset::{draw_windows, load_csv, prepare_windows, write_csv, ScalingStats, SeriesDataset};
use statecoder_core::embedding::{
    agreement, extract_embeddings, fit_pca, kmeans, load_artifact, read_embeddings_csv, save_artifact,
    write_embeddings_csv, ClusterModel, ClusterSpace, EmbeddingSet, PcaModel, StateClassifier, StreamMonitor,
};
use statecoder_core::neural::{evaluate_mse, load_model, save_model, train, AutoencoderParams, ModelConfig};
use statecoder_core::synthplant::generate;
use statecoder_core::{Error, Result};

use crate::config::RunConfig;

pub const CLUSTERS_KIND: &str = "clusters";
pub const CLASSIFIER_KIND: &str = "state-classifier";

/// Loss curves as written by `train`; timings live in a separate file so
/// this one is reproducible byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossReport {
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterArtifact {
    pub space: ClusterSpace,
    pub pca: Option<PcaModel>,
    pub kmeans: ClusterModel,
    /// Leading embeddings the models were fitted on.
    pub train_count: usize,
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Fails with a usage error naming `what` when `path` does not exist.
pub fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Usage(format!("missing {what}: {}", path.display())))
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn labels_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or("data".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.labels.csv"))
}

pub fn synth(config: &RunConfig, out: &Path) -> Result<()> {
    let (spec, length) = config.plant_spec()?;
    let series = generate(&spec, length)?;
    write_csv(&series.data, out)?;
    let sidecar = labels_path(out);
    let mut w = BufWriter::new(File::create(&sidecar).map_err(io_err(&sidecar))?);
    writeln!(w, "t,regime").map_err(io_err(&sidecar))?;
    for (t, label) in series.regime_labels.iter().enumerate() {
        writeln!(w, "{t},{label}").map_err(io_err(&sidecar))?;
    }
    w.flush().map_err(io_err(&sidecar))
}

pub struct TrainPaths {
    pub model: PathBuf,
    pub scaler: PathBuf,
    pub report: PathBuf,
    pub timing: PathBuf,
}

impl TrainPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            model: dir.join("model.bin"),
            scaler: dir.join("scaler.json"),
            report: dir.join("report.json"),
            timing: dir.join("timing.json"),
        }
    }
}

pub fn train_cmd(config: &RunConfig, input: Option<&Path>, out_dir: &Path) -> Result<()> {
    let data = config.data()?;
    let path = input.unwrap_or(&data.path);
    let raw = load_csv(path, data.has_header)?;
    let (model_cfg, inputs) = config.model_config(&raw)?;
    let dataset = raw.select_channels(&inputs)?;
    let prepared = prepare_windows(&dataset, model_cfg.seq_len, config.split()?)?;
    let (params, report) = train(&model_cfg, &prepared.train, &prepared.validation)?;

    create_dir(out_dir)?;
    let paths = TrainPaths::in_dir(out_dir);
    save_model(&params, &model_cfg, &paths.model)?;
    prepared.scaler.save(&paths.scaler)?;
    let losses = LossReport {
        train_mse: report.train_mse.clone(),
        validation_mse: report.validation_mse.clone(),
    };
    write_json(&losses, &paths.report)?;
    write_json(&serde_json::json!({ "wall_time_secs": report.wall_time_secs }), &paths.timing)
}

/// A trained model with the scaler that prepared its inputs.
pub struct Trained {
    pub params: AutoencoderParams,
    pub config: ModelConfig,
    pub scaler: ScalingStats,
}

impl Trained {
    pub fn load(model: &Path, scaler: &Path) -> Result<Self> {
        require(model, "model")?;
        require(scaler, "scaler")?;
        let (params, config) = load_model(model)?;
        let scaler = ScalingStats::load(scaler)?;
        if scaler.n_channels() != config.input_dim {
            return Err(Error::Usage(format!(
                "scaler has {} channels but the model takes {}",
                scaler.n_channels(),
                config.input_dim
            )));
        }
        Ok(Self { params, config, scaler })
    }

    /// Reads `input` and keeps the columns the scaler was fitted on.
    pub fn read_input(&self, input: &Path, has_header: bool) -> Result<SeriesDataset> {
        require(input, "input")?;
        let raw = load_csv(input, has_header)?;
        let mut columns = Vec::with_capacity(self.scaler.channels.len());
        for name in &self.scaler.channels {
            let idx = raw
                .channel_names()
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Usage(format!("{} has no column {name:?}", input.display())))?;
            columns.push(idx);
        }
        raw.select_channels(&columns)
    }

    pub fn embeddings(&self, dataset: &SeriesDataset) -> Result<EmbeddingSet> {
        let windows = draw_windows(&self.scaler.apply(dataset)?, self.config.seq_len)?;
        extract_embeddings(&self.params, &windows)
    }
}

#[derive(Serialize)]
struct EvalSummary {
    windows: usize,
    train_windows: usize,
    train_mse: f64,
    validation_mse: f64,
}

pub fn eval(trained: &Trained, dataset: &SeriesDataset, config: Option<&RunConfig>) -> Result<String> {
    let split = match config {
        Some(c) => c.split()?,
        None => Default::default(),
    };
    let windows = draw_windows(&trained.scaler.apply(dataset)?, trained.config.seq_len)?;
    let n = windows.len();
    let b = split.boundary_index(n);
    let (train_w, val_w) = statecoder_core::dataset::split_windows(windows, split)?;
    let out = &trained.config.output_channels;
    let summary = EvalSummary {
        windows: n,
        train_windows: b,
        train_mse: evaluate_mse(&trained.params, &train_w, out)?,
        validation_mse: evaluate_mse(&trained.params, &val_w, out)?,
    };
    serde_json::to_string(&summary).map_err(|e| Error::Format(e.to_string()))
}

pub fn embed(trained: &Trained, dataset: &SeriesDataset, out: &Path) -> Result<()> {
    write_embeddings_csv(&trained.embeddings(dataset)?, out)
}

fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    require(path, "embeddings")?;
    let set = read_embeddings_csv(path)?;
    if set.len() < 2 {
        return Err(Error::Usage(format!("{} holds fewer than 2 embeddings", path.display())));
    }
    Ok(set)
}

pub fn cluster(config: &RunConfig, embeddings: &Path, out: &Path) -> Result<()> {
    let set = read_embeddings(embeddings)?;
    let a = &config.analysis;
    let train_count = config.split()?.boundary_index(set.len());
    if train_count < a.clusters.max(2) {
        return Err(Error::Usage(format!(
            "{train_count} training embeddings cannot form {} clusters",
            a.clusters
        )));
    }
    let train_m = set.slice(0..train_count).to_matrix();
    let pca = match a.space {
        ClusterSpace::Pca2 => Some(fit_pca(&train_m, a.pca_components)?),
        ClusterSpace::Full => None,
    };
    let points = match &pca {
        Some(p) => p.project(&train_m)?,
        None => train_m,
    };
    let model = kmeans(&points, a.clusters, a.seed)?;
    let artifact = ClusterArtifact {
        space: a.space,
        pca,
        kmeans: model,
        train_count,
    };
    save_artifact(CLUSTERS_KIND, &artifact, out)
}

fn features(pca: Option<&PcaModel>, m: &Array2<f64>) -> Result<Array2<f64>> {
    match pca {
        Some(p) => p.project(m),
        None => Ok(m.clone()),
    }
}

pub fn classify_cmd(
    config: &RunConfig,
    embeddings: &Path,
    clusters: &Path,
    out: &Path,
    labels_out: Option<&Path>,
) -> Result<String> {
    let set = read_embeddings(embeddings)?;
    require(clusters, "clusters artifact")?;
    let art: ClusterArtifact = load_artifact(CLUSTERS_KIND, clusters)?;
    if art.train_count > set.len() {
        return Err(Error::Usage(format!(
            "clusters were fitted on {} embeddings, {} given",
            art.train_count,
            set.len()
        )));
    }
    let all = set.to_matrix();
    let train_m = set.slice(0..art.train_count).to_matrix();
    let classifier = StateClassifier::fit(
        &train_m,
        &art.kmeans.assignments,
        art.pca.clone(),
        config.analysis.svm_options(),
    )?;
    let svm_labels = classifier.classify_contexts(&all)?;
    let km_labels = art.kmeans.predict(&features(art.pca.as_ref(), &all)?)?;
    let held_out = if art.train_count < set.len() {
        Some(agreement(&svm_labels[art.train_count..], &km_labels[art.train_count..])?)
    } else {
        None
    };

    save_artifact(CLASSIFIER_KIND, &classifier, out)?;
    if let Some(path) = labels_out {
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        writeln!(w, "window_start,label,kmeans_label").map_err(io_err(path))?;
        for ((start, s), k) in set.starts().iter().zip(&svm_labels).zip(&km_labels) {
            writeln!(w, "{start},{s},{k}").map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
    }
    serde_json::to_string(&serde_json::json!({
        "embeddings": set.len(),
        "train_count": art.train_count,
        "held_out_agreement": held_out,
    }))
    .map_err(|e| Error::Format(e.to_string()))
}

pub fn load_classifier(path: &Path) -> Result<StateClassifier> {
    require(path, "classifier artifact")?;
    load_artifact(CLASSIFIER_KIND, path)
}

/// Replays `dataset` frame by frame. Events go to `events` as one JSON
/// record per line; per-window labels optionally to `labels_out`.
pub fn monitor_cmd(
    trained: &Trained,
    classifier: &StateClassifier,
    dataset: &SeriesDataset,
    events: &mut dyn Write,
    labels_out: Option<&Path>,
) -> Result<usize> {
    let mut monitor = StreamMonitor::new(
        &trained.params,
        trained.scaler.clone(),
        classifier,
        trained.config.seq_len,
    )?;
    let mut labels = Vec::new();
    let mut count = 0;
    let stdout_err = |e: io::Error| Error::Io {
        path: PathBuf::from("<events>"),
        source: e,
    };
    for frame in dataset.frames().rows() {
        let frame = frame.to_vec();
        if let Some(step) = monitor.push(&frame)? {
            labels.push((step.window_start, step.label));
            if let Some(event) = step.event {
                let line = serde_json::to_string(&event).map_err(|e| Error::Format(e.to_string()))?;
                writeln!(events, "{line}").map_err(stdout_err)?;
                count += 1;
            }
        }
    }
    events.flush().map_err(stdout_err)?;
    if let Some(path) = labels_out {
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        writeln!(w, "window_start,label").map_err(io_err(path))?;
        for (start, label) in labels {
            writeln!(w, "{start},{label}").map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
    }
    Ok(count)
}
