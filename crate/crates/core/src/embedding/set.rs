use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::dataset::WindowSample;
use crate::error::{Error, Result};
use crate::neural::{encode_batch, AutoencoderParams, ContextVector};

/// Context vectors in window order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingSet {
    vectors: Vec<ContextVector>,
}

impl EmbeddingSet {
    /// Requires a uniform width and non-decreasing `window_start`.
    pub fn new(vectors: Vec<ContextVector>) -> Result<Self> {
        if let Some(first) = vectors.first() {
            let h = first.values.len();
            if vectors.iter().any(|v| v.values.len() != h) {
                return Err(Error::usage("context vectors differ in length"));
            }
        }
        if vectors.windows(2).any(|w| w[1].window_start < w[0].window_start) {
            return Err(Error::usage("context vectors are not time-ordered"));
        }
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &[ContextVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.values.len())
    }

    pub fn starts(&self) -> Vec<usize> {
        self.vectors.iter().map(|v| v.window_start).collect()
    }

    /// `n x H` matrix, one row per vector.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.len(), self.dim()));
        for (mut row, v) in m.rows_mut().into_iter().zip(&self.vectors) {
            row.assign(&v.values);
        }
        m
    }

    /// Rows `range` as a new set.
    pub fn slice(&self, range: std::ops::Range<usize>) -> EmbeddingSet {
        EmbeddingSet {
            vectors: self.vectors[range].to_vec(),
        }
    }
}

/// One context vector per window, dropout disabled, order preserved.
pub fn extract_embeddings(params: &AutoencoderParams, windows: &[WindowSample]) -> Result<EmbeddingSet> {
    if windows.is_empty() {
        return Ok(EmbeddingSet::default());
    }
    EmbeddingSet::new(encode_batch(params, windows)?)
}

/// CSV with a `window_start` column followed by one column per dimension.
pub fn write_embeddings_csv(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let mut header = String::from("window_start");
    for j in 0..set.dim() {
        header.push_str(&format!(",c{j:03}"));
    }
    writeln!(out, "{header}").map_err(io)?;
    for v in set.vectors() {
        let mut line = v.window_start.to_string();
        for x in &v.values {
            line.push(',');
            line.push_str(&x.to_string());
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_embeddings_csv(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut vectors = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse_err = |cell: &str| Error::Parse {
            line,
            message: format!("cannot parse {cell:?}"),
        };
        let mut cells = record.iter();
        let start = cells.next().ok_or_else(|| parse_err(""))?;
        let window_start: usize = start.trim().parse().map_err(|_| parse_err(start))?;
        let values = cells
            .map(|c| c.trim().parse::<f64>().map_err(|_| parse_err(c)))
            .collect::<Result<Vec<_>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data {
                line,
                message: "non-finite embedding value".into(),
            });
        }
        vectors.push(ContextVector {
            values: Array1::from(values),
            window_start,
        });
    }
    EmbeddingSet::new(vectors)
}
