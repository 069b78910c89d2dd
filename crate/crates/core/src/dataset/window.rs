use ndarray::{s, Array2};

use super::SeriesDataset;
use crate::error::{Error, Result};

/// A `T x P` slice of consecutive scaled frames.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub values: Array2<f64>,
    pub start_index: usize,
}

impl WindowSample {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }

    /// The window restricted to `channels`, in that order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<WindowSample> {
        if let Some(&bad) = channels.iter().find(|&&c| c >= self.n_channels()) {
            return Err(Error::usage(format!(
                "channel index {bad} out of range for {} channels",
                self.n_channels()
            )));
        }
        Ok(WindowSample {
            values: self.values.select(ndarray::Axis(1), channels),
            start_index: self.start_index,
        })
    }
}

/// Slides a length-`t` window one step at a time over the dataset,
/// producing `T' - t` samples starting at offsets `0..T'-t`.
pub fn draw_windows(dataset: &SeriesDataset, t: usize) -> Result<Vec<WindowSample>> {
    if t == 0 {
        return Err(Error::usage("sample length must be positive"));
    }
    if t >= dataset.len() {
        return Err(Error::usage(format!(
            "sample length exceeds dataset ({t} >= {})",
            dataset.len()
        )));
    }
    let frames = dataset.frames();
    Ok((0..dataset.len() - t)
        .map(|k| WindowSample {
            values: frames.slice(s![k..k + t, ..]).to_owned(),
            start_index: k,
        })
        .collect())
}

/// Contiguous, unshuffled train/validation split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.7 }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::usage(format!(
                "train fraction {train_fraction} not in (0, 1)"
            )));
        }
        Ok(Self { train_fraction })
    }

    /// Number of leading items that go to training, `floor(fraction * n)`.
    pub fn boundary_index(&self, n: usize) -> usize {
        (self.train_fraction * n as f64).floor() as usize
    }
}

/// Splits time-ordered windows into a leading training block and a
/// trailing validation block.
pub fn split_windows(
    windows: Vec<WindowSample>,
    spec: SplitSpec,
) -> Result<(Vec<WindowSample>, Vec<WindowSample>)> {
    let n = windows.len();
    if n < 2 {
        return Err(Error::usage(format!("need at least 2 windows to split, got {n}")));
    }
    SplitSpec::new(spec.train_fraction)?;
    let b = spec.boundary_index(n);
    if b == 0 || b == n {
        return Err(Error::usage(format!(
            "fraction {} leaves an empty side for {n} windows",
            spec.train_fraction
        )));
    }
    let mut train = windows;
    let val = train.split_off(b);
    Ok((train, val))
}
