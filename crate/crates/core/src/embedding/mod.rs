//! Context-vector analysis: extraction, PCA projection, K-means
//! clustering, RBF-SVM cluster assignment, trajectory smoothness and
//! online cluster-change monitoring.

mod artifact;
mod kmeans;
mod metrics;
mod monitor;
mod pca;
mod set;
mod smoothness;
mod svm;

pub use artifact::{load_artifact, save_artifact, Artifact, ARTIFACT_VERSION};
pub use kmeans::{kmeans, kmeans_with, ClusterModel, KmeansOptions};
pub use metrics::{adjusted_rand_index, agreement};
pub use monitor::{
    classify_windows, monitor, ClusterChangeEvent, ClusterSpace, MonitorStep, StateClassifier,
    StreamMonitor,
};
pub use pca::{fit_pca, PcaModel};
pub use set::{extract_embeddings, read_embeddings_csv, write_embeddings_csv, EmbeddingSet};
pub use smoothness::{trajectory_smoothness, trajectory_smoothness_with, SMOOTHNESS_PAIRS};
pub use svm::{classify, decision_grid, fit_svm, rbf_kernel, DecisionGrid, PairwiseSvm, RbfSvmModel, SvmOptions};
