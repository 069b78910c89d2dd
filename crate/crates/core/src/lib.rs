//! Operating-state recognition for multichannel industrial sensor data.
//!
//! A recurrent auto-encoder compresses sliding windows of scaled sensor
//! frames into fixed-length context vectors. Those vectors are projected with
//! PCA, clustered with K-means and assigned by an RBF-kernel SVM, offline or
//! over an unbounded frame stream.

pub mod dataset;
pub mod embedding;
pub mod error;
pub mod neural;
pub mod synthplant;

pub use error::{Error, ErrorKind, Result};
