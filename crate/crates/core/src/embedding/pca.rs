use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal axes of a point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `n_components x d`, orthonormal rows.
    pub components: Array2<f64>,
    /// Variance along each component, descending.
    pub explained_variance: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
}

/// Eigen-decomposition of the sample covariance of `points` (`n x d`).
///
/// Each component is signed so its largest-magnitude entry is positive.
pub fn fit_pca(points: &Array2<f64>, n_components: usize) -> Result<PcaModel> {
    let (n, d) = points.dim();
    if n < 2 {
        return Err(Error::usage(format!("PCA needs at least 2 samples, got {n}")));
    }
    if n_components == 0 || n_components > d.min(n) {
        return Err(Error::usage(format!(
            "n_components {n_components} not in [1, {}]",
            d.min(n)
        )));
    }
    let mean = points.mean_axis(Axis(0)).expect("non-empty");
    let centered = points - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let total_variance = cov.diag().sum();

    let sym = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    // stable sort keeps index order among equal eigenvalues
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Array2::zeros((n_components, d));
    let mut explained_variance = Vec::with_capacity(n_components);
    for (r, &idx) in order.iter().take(n_components).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let pivot = (0..d)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .expect("d > 0");
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[r, j]] = sign * col[j];
        }
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    /// `(x - mean) * components^T`, `n x n_components`.
    pub fn project(&self, points: &Array2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.dim() {
            return Err(Error::usage(format!(
                "points have {} columns, PCA expects {}",
                points.ncols(),
                self.dim()
            )));
        }
        Ok((points - &self.mean).dot(&self.components.t()))
    }

    /// Maps projected coordinates back to the original space.
    pub fn reconstruct(&self, projected: &Array2<f64>) -> Result<Array2<f64>> {
        if projected.ncols() != self.n_components() {
            return Err(Error::usage("projection width does not match PCA"));
        }
        Ok(projected.dot(&self.components) + &self.mean)
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }
}
