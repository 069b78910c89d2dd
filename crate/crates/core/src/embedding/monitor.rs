use ndarray::{Array1, Array2};
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::dataset::{ScalingStats, StreamBuffer, WindowSample};
use crate::embedding::{classify, fit_svm, PcaModel, RbfSvmModel, SvmOptions};
use crate::error::{Error, Result};
use crate::neural::{encode, encode_batch, AutoencoderParams, ContextVector};

/// Space in which clusters are separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterSpace {
    /// 2-D PCA projection of the context vectors.
    #[default]
    Pca2,
    /// The raw context vectors.
    Full,
}

/// Maps context vectors to cluster labels: optional projection, then SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateClassifier {
    pub pca: Option<PcaModel>,
    pub svm: RbfSvmModel,
}

impl StateClassifier {
    pub fn new(pca: Option<PcaModel>, svm: RbfSvmModel) -> Result<Self> {
        if let Some(p) = &pca {
            if p.n_components() != svm.dim {
                return Err(Error::usage(format!(
                    "PCA yields {} components, SVM expects {}",
                    p.n_components(),
                    svm.dim
                )));
            }
        }
        Ok(Self { pca, svm })
    }

    /// Fits the SVM on `contexts` (projected when `pca` is given).
    pub fn fit(contexts: &Array2<f64>, labels: &[usize], pca: Option<PcaModel>, opts: SvmOptions) -> Result<Self> {
        let features = match &pca {
            Some(p) => p.project(contexts)?,
            None => contexts.clone(),
        };
        let svm = fit_svm(&features, labels, opts)?;
        Self::new(pca, svm)
    }

    pub fn space(&self) -> ClusterSpace {
        if self.pca.is_some() {
            ClusterSpace::Pca2
        } else {
            ClusterSpace::Full
        }
    }

    /// Width of the context vectors accepted.
    pub fn input_dim(&self) -> usize {
        self.pca.as_ref().map_or(self.svm.dim, PcaModel::dim)
    }

    pub fn classify_contexts(&self, contexts: &Array2<f64>) -> Result<Vec<usize>> {
        match &self.pca {
            Some(p) => classify(&self.svm, &p.project(contexts)?),
            None => classify(&self.svm, contexts),
        }
    }

    pub fn classify_one(&self, context: &ContextVector) -> Result<usize> {
        let row = context.values.clone().insert_axis(ndarray::Axis(0));
        Ok(self.classify_contexts(&row)?[0])
    }
}

/// A change of cluster label between consecutive windows. The first window
/// of a stream yields a start event with no `from_cluster`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterChangeEvent {
    /// `start_index` of the window carrying the new label.
    pub at_index: usize,
    pub from_cluster: Option<usize>,
    pub to_cluster: usize,
}

impl ClusterChangeEvent {
    pub fn is_start(&self) -> bool {
        self.from_cluster.is_none()
    }
}

impl Serialize for ClusterChangeEvent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        map.serialize_entry("at", &self.at_index)?;
        map.serialize_entry("from", &self.from_cluster)?;
        map.serialize_entry("to", &self.to_cluster)?;
        if self.is_start() {
            map.serialize_entry("start", &true)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitorStep {
    pub window_start: usize,
    pub label: usize,
    pub event: Option<ClusterChangeEvent>,
}

/// Online pipeline: frame → window → context → label → event.
pub struct StreamMonitor<'a> {
    buffer: StreamBuffer,
    params: &'a AutoencoderParams,
    classifier: &'a StateClassifier,
    last: Option<usize>,
}

impl<'a> StreamMonitor<'a> {
    pub fn new(
        params: &'a AutoencoderParams,
        scaler: ScalingStats,
        classifier: &'a StateClassifier,
        window_len: usize,
    ) -> Result<Self> {
        if scaler.n_channels() != params.input_dim() {
            return Err(Error::usage(format!(
                "scaler has {} channels, model expects {}",
                scaler.n_channels(),
                params.input_dim()
            )));
        }
        if classifier.input_dim() != params.hidden() {
            return Err(Error::usage(format!(
                "classifier expects {}-D contexts, model produces {}",
                classifier.input_dim(),
                params.hidden()
            )));
        }
        Ok(Self {
            buffer: StreamBuffer::new(scaler, window_len)?,
            params,
            classifier,
            last: None,
        })
    }

    /// Feeds one raw frame. Returns a step once a full window is available.
    pub fn push(&mut self, frame: &[f64]) -> Result<Option<MonitorStep>> {
        let Some(window) = self.buffer.push(frame)? else {
            return Ok(None);
        };
        let context = encode(self.params, &window, None)?;
        let label = self.classifier.classify_one(&context)?;
        let event = match self.last {
            Some(prev) if prev == label => None,
            from => Some(ClusterChangeEvent {
                at_index: window.start_index,
                from_cluster: from,
                to_cluster: label,
            }),
        };
        self.last = Some(label);
        Ok(Some(MonitorStep {
            window_start: window.start_index,
            label,
            event,
        }))
    }
}

/// Runs a [`StreamMonitor`] over every row of `frames`.
pub fn monitor(
    params: &AutoencoderParams,
    scaler: ScalingStats,
    classifier: &StateClassifier,
    window_len: usize,
    frames: &Array2<f64>,
) -> Result<Vec<MonitorStep>> {
    let mut m = StreamMonitor::new(params, scaler, classifier, window_len)?;
    let mut steps = Vec::new();
    for row in frames.rows() {
        let frame: Array1<f64> = row.to_owned();
        if let Some(step) = m.push(frame.as_slice().expect("contiguous"))? {
            steps.push(step);
        }
    }
    Ok(steps)
}

/// Batch labels for already-scaled windows.
pub fn classify_windows(
    params: &AutoencoderParams,
    classifier: &StateClassifier,
    windows: &[WindowSample],
) -> Result<Vec<usize>> {
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let contexts = encode_batch(params, windows)?;
    let h = params.hidden();
    let mut m = Array2::zeros((contexts.len(), h));
    for (mut row, c) in m.rows_mut().into_iter().zip(&contexts) {
        row.assign(&c.values);
    }
    classifier.classify_contexts(&m)
}
