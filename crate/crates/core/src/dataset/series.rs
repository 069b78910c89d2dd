use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Ordered multichannel frames, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDataset {
    channel_names: Vec<String>,
    frames: Array2<f64>,
    /// Sampling interval, informational only.
    pub granularity_minutes: f64,
}

impl SeriesDataset {
    /// Builds a dataset from a `T' x P` frame matrix.
    pub fn new(channel_names: Vec<String>, frames: Array2<f64>) -> Result<Self> {
        if channel_names.len() != frames.ncols() {
            return Err(Error::usage(format!(
                "{} channel names for {} columns",
                channel_names.len(),
                frames.ncols()
            )));
        }
        if channel_names.is_empty() {
            return Err(Error::usage("dataset needs at least one channel"));
        }
        Ok(Self {
            channel_names,
            frames: frames.as_standard_layout().into_owned(),
            granularity_minutes: 5.0,
        })
    }

    /// Builds a dataset with auto-generated `ch000..` channel names.
    pub fn from_frames(frames: Array2<f64>) -> Result<Self> {
        let names = default_names(frames.ncols());
        Self::new(names, frames)
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> ArrayView1<'_, f64> {
        self.frames.row(index)
    }

    /// Number of time steps (T').
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    /// Number of channels (P).
    pub fn n_channels(&self) -> usize {
        self.frames.ncols()
    }

    /// Keeps only the listed channels, in the listed order.
    pub fn select_channels(&self, indices: &[usize]) -> Result<SeriesDataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_channels()) {
            return Err(Error::usage(format!(
                "channel index {bad} out of range for {} channels",
                self.n_channels()
            )));
        }
        let frames = self.frames.select(Axis(1), indices);
        let names = indices
            .iter()
            .map(|&i| self.channel_names[i].clone())
            .collect();
        let mut out = SeriesDataset::new(names, frames)?;
        out.granularity_minutes = self.granularity_minutes;
        Ok(out)
    }

    /// Rows `range`, as a new dataset.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Result<SeriesDataset> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::usage(format!(
                "row range {range:?} outside dataset of length {}",
                self.len()
            )));
        }
        let frames = self
            .frames
            .slice(ndarray::s![range.start..range.end, ..])
            .to_owned();
        let mut out = SeriesDataset::new(self.channel_names.clone(), frames)?;
        out.granularity_minutes = self.granularity_minutes;
        Ok(out)
    }
}

pub(crate) fn default_names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("ch{i:03}")).collect()
}

/// Reads a comma-separated file with one row per time step.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<SeriesDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, has_header)
}

pub(crate) fn read_csv<R: std::io::Read>(reader: R, has_header: bool) -> Result<SeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .from_reader(reader);

    let mut names = if has_header {
        let header = rdr.headers().map_err(|e| csv_error(e, 1))?;
        Some(header.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>())
    } else {
        None
    };

    let mut values = Vec::new();
    let mut n_cols = names.as_ref().map(Vec::len);
    let mut n_rows = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        match n_cols {
            Some(n) if n != record.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {n} columns, found {}", record.len()),
                })
            }
            None => n_cols = Some(record.len()),
            _ => {}
        }
        for cell in record.iter() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    line,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values.push(v);
        }
        n_rows += 1;
    }

    let p = n_cols.unwrap_or(0);
    if p == 0 {
        return Err(Error::Data {
            line: 1,
            message: "no columns".into(),
        });
    }
    let frames = Array2::from_shape_vec((n_rows, p), values).expect("row lengths checked");
    let names = names.take().unwrap_or_else(|| default_names(p));
    SeriesDataset::new(names, frames)
}

fn csv_error(err: csv::Error, fallback_line: usize) -> Error {
    let line = err
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    let message = match err.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} columns, found {len}"),
        _ => err.to_string(),
    };
    Error::Parse { line, message }
}

/// Writes the dataset with a header row. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv(dataset: &SeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_rows(dataset, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn write_rows<W: Write>(dataset: &SeriesDataset, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{}", dataset.channel_names.join(","))?;
    let mut line = String::new();
    for row in dataset.frames.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
