//! Plot-ready CSV exports of a finished run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statecoder_core::dataset::{draw_windows, split_windows, SeriesDataset};
use statecoder_core::embedding::{decision_grid, fit_pca, read_embeddings_csv, StateClassifier};
use statecoder_core::neural::reconstruct;
use statecoder_core::{Error, Result};

use crate::commands::{require, LossReport, Trained};
use crate::config::RunConfig;

struct Csv {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Csv {
    fn create(path: PathBuf, header: &str) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let mut csv = Self {
            path,
            out: BufWriter::new(file),
        };
        csv.line(header)?;
        Ok(csv)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.out, "{text}").map_err(|e| Error::Io {
            path: self.path.clone(),
            source: e,
        })
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.out.flush().map_err(|e| Error::Io {
            path: self.path.clone(),
            source: e,
        })?;
        Ok(self.path)
    }
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// `label=path` or a bare path labeled by its parent directory.
pub fn parse_report_arg(arg: &str) -> (String, PathBuf) {
    if let Some((label, path)) = arg.split_once('=') {
        return (label.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(arg);
    let label = path
        .parent()
        .and_then(|p| p.file_name())
        .map_or_else(|| "run".to_string(), |n| n.to_string_lossy().into_owned());
    (label, path)
}

/// One `mse_<label>.csv` per loss report.
pub fn mse_curves(reports: &[(String, PathBuf)], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut seen = std::collections::BTreeSet::new();
    let mut loaded = Vec::new();
    for (label, path) in reports {
        require(path, "report")?;
        if !seen.insert(label.clone()) {
            return Err(Error::Usage(format!("report label {label:?} given twice")));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let report: LossReport =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        loaded.push((label, report));
    }
    let mut written = Vec::new();
    for (label, report) in loaded {
        let mut csv = Csv::create(out_dir.join(format!("mse_{label}.csv")), "epoch,train_mse,validation_mse")?;
        for (e, (t, v)) in report.train_mse.iter().zip(&report.validation_mse).enumerate() {
            csv.line(&format!("{},{t},{v}", e + 1))?;
        }
        written.push(csv.finish()?);
    }
    Ok(written)
}

/// Targets and reconstructions of seeded-random validation windows, in long
/// form: one row per (window, matrix, step).
pub fn heatmaps(trained: &Trained, dataset: &SeriesDataset, config: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let windows = draw_windows(&trained.scaler.apply(dataset)?, trained.config.seq_len)?;
    let (_, validation) = split_windows(windows, config.split()?)?;
    let count = config.analysis.heatmap_windows;
    if validation.len() < count {
        return Err(Error::Usage(format!(
            "{} validation windows, {count} requested for heatmaps",
            validation.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.analysis.seed);
    let mut picks = sample(&mut rng, validation.len(), count).into_vec();
    picks.sort_unstable();

    let channels = &trained.config.output_channels;
    let names: Vec<String> = channels.iter().map(|&c| trained.scaler.channels[c].clone()).collect();
    let mut csv = Csv::create(
        out_dir.join("heatmap.csv"),
        &format!("window_start,matrix,t,{}", names.join(",")),
    )?;
    for &i in &picks {
        let w = &validation[i];
        let target = w.select_channels(channels)?.values;
        let output = reconstruct(&trained.params, w)?;
        for (name, m) in [("target", &target), ("output", &output)] {
            for (t, row) in m.rows().into_iter().enumerate() {
                csv.line(&format!("{},{name},{t},{}", w.start_index, join(row.iter().copied())))?;
            }
        }
    }
    csv.finish()
}

/// 2-D projection with labels, the trajectory edge list, and the decision
/// grid of a 2-D classifier.
pub fn projection(
    embeddings: &Path,
    classifier: &StateClassifier,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    require(embeddings, "embeddings")?;
    let set = read_embeddings_csv(embeddings)?;
    if set.len() < 2 {
        return Err(Error::Usage(format!("{} holds fewer than 2 embeddings", embeddings.display())));
    }
    let m = set.to_matrix();
    let labels = classifier.classify_contexts(&m)?;
    let coords = match &classifier.pca {
        Some(p) if p.n_components() == 2 => p.project(&m)?,
        _ => fit_pca(&m, 2)?.project(&m)?,
    };
    let starts = set.starts();
    let mut written = Vec::new();

    let mut csv = Csv::create(out_dir.join("projection.csv"), "window_start,pc1,pc2,label")?;
    for i in 0..set.len() {
        csv.line(&format!("{},{},{},{}", starts[i], coords[[i, 0]], coords[[i, 1]], labels[i]))?;
    }
    written.push(csv.finish()?);

    let mut csv = Csv::create(out_dir.join("trajectory.csv"), "from,to,x0,y0,x1,y1")?;
    for i in 1..set.len() {
        csv.line(&format!(
            "{},{},{},{},{},{}",
            starts[i - 1],
            starts[i],
            coords[[i - 1, 0]],
            coords[[i - 1, 1]],
            coords[[i, 0]],
            coords[[i, 1]]
        ))?;
    }
    written.push(csv.finish()?);

    if classifier.svm.dim == 2 {
        let bounds = padded_bounds(&coords);
        let grid = decision_grid(&classifier.svm, bounds, config.analysis.grid_resolution)?;
        let mut csv = Csv::create(out_dir.join("decision_grid.csv"), "x,y,label")?;
        for (iy, &y) in grid.ys.iter().enumerate() {
            for (ix, &x) in grid.xs.iter().enumerate() {
                csv.line(&format!("{x},{y},{}", grid.labels[[iy, ix]]))?;
            }
        }
        written.push(csv.finish()?);
    }
    Ok(written)
}

fn padded_bounds(coords: &ndarray::Array2<f64>) -> [f64; 4] {
    let range = |c: usize| {
        let col = coords.column(c);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.05).max(1e-6);
        (lo - pad, hi + pad)
    };
    let (x0, x1) = range(0);
    let (y0, y1) = range(1);
    [x0, x1, y0, y1]
}
