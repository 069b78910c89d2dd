use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::SeriesDataset;
use crate::error::{Error, Result};

/// Channels whose standard deviation falls below this are treated as
/// constant and get a unit divisor.
pub const MIN_STD: f64 = 1e-12;

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub channels: Vec<String>,
}

/// Fits population mean and standard deviation over `fit_range` of the
/// dataset rows.
pub fn fit_scaler(dataset: &SeriesDataset, fit_range: Range<usize>) -> Result<ScalingStats> {
    if fit_range.is_empty() {
        return Err(Error::usage("scaler fit range is empty"));
    }
    if fit_range.end > dataset.len() {
        return Err(Error::usage(format!(
            "scaler fit range {fit_range:?} exceeds dataset length {}",
            dataset.len()
        )));
    }
    let p = dataset.n_channels();
    let n = fit_range.len() as f64;
    let mut mean = vec![0.0; p];
    for t in fit_range.clone() {
        for (m, &x) in mean.iter_mut().zip(dataset.frame(t)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut var = vec![0.0; p];
    for t in fit_range {
        for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(dataset.frame(t)) {
            let d = x - m;
            *v += d * d;
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s < MIN_STD {
                1.0
            } else {
                s
            }
        })
        .collect();

    Ok(ScalingStats {
        mean,
        std,
        channels: dataset.channel_names().to_vec(),
    })
}

impl ScalingStats {
    pub fn n_channels(&self) -> usize {
        self.mean.len()
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        if p != self.n_channels() {
            return Err(Error::usage(format!(
                "scaler fitted on {} channels, got {p}",
                self.n_channels()
            )));
        }
        Ok(())
    }

    /// Scales one frame in place.
    pub fn scale_frame(&self, frame: &mut [f64]) -> Result<()> {
        self.check_dim(frame.len())?;
        for ((x, &m), &s) in frame.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
        Ok(())
    }

    pub fn scaled_frame(&self, frame: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        let mut out = frame.to_vec();
        self.scale_frame(&mut out)?;
        Ok(out)
    }

    /// Maps every value to `(x - mean) / std`.
    pub fn apply(&self, dataset: &SeriesDataset) -> Result<SeriesDataset> {
        self.check_dim(dataset.n_channels())?;
        let mut frames: Array2<f64> = dataset.frames().clone();
        for mut row in frames.rows_mut() {
            let row = row.as_slice_mut().expect("standard layout");
            self.scale_frame(row)?;
        }
        let mut out = SeriesDataset::new(dataset.channel_names().to_vec(), frames)?;
        out.granularity_minutes = dataset.granularity_minutes;
        Ok(out)
    }

    /// Inverse of [`ScalingStats::apply`].
    pub fn invert(&self, dataset: &SeriesDataset) -> Result<SeriesDataset> {
        self.check_dim(dataset.n_channels())?;
        let mut frames: Array2<f64> = dataset.frames().clone();
        for mut row in frames.rows_mut() {
            for ((x, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = *x * s + m;
            }
        }
        let mut out = SeriesDataset::new(dataset.channel_names().to_vec(), frames)?;
        out.granularity_minutes = dataset.granularity_minutes;
        Ok(out)
    }

    /// Restricts the statistics to a channel subset, in the given order.
    pub fn select_channels(&self, indices: &[usize]) -> Result<ScalingStats> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_channels()) {
            return Err(Error::usage(format!("channel index {bad} out of range")));
        }
        Ok(ScalingStats {
            mean: indices.iter().map(|&i| self.mean[i]).collect(),
            std: indices.iter().map(|&i| self.std[i]).collect(),
            channels: indices.iter().map(|&i| self.channels[i].clone()).collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).expect("plain data serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stats: ScalingStats = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("scaler {}: {e}", path.display())))?;
        if stats.std.len() != stats.mean.len() || stats.channels.len() != stats.mean.len() {
            return Err(Error::Format("scaler field lengths differ".into()));
        }
        if stats.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Format("scaler std must be positive".into()));
        }
        Ok(stats)
    }
}
