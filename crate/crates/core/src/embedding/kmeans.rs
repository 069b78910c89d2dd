use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansOptions {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// `J x d`
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment pass.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point, ties to the lowest index, plus each
/// point's squared distance to it.
fn assign(points: &Array2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

/// k-means++ seeding: first centroid uniform, then proportional to squared
/// distance from the nearest chosen centroid.
fn seed_centroids(points: &Array2<f64>, j: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, points.row(chosen[0])))
        .collect();
    while chosen.len() < j {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 && r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            if dist[pick] == 0.0 {
                // rounding walked past the end; take the last positive entry
                pick = dist.iter().rposition(|&d| d > 0.0).expect("total > 0");
            }
            pick
        } else {
            // all remaining points coincide with a centroid
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.rows().into_iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(p, points.row(next)));
        }
    }
    points.select(Axis(0), &chosen)
}

/// Lloyd's algorithm with default options.
pub fn kmeans(points: &Array2<f64>, j: usize, seed: u64) -> Result<ClusterModel> {
    kmeans_with(points, j, seed, KmeansOptions::default())
}

pub fn kmeans_with(points: &Array2<f64>, j: usize, seed: u64, opts: KmeansOptions) -> Result<ClusterModel> {
    let (n, d) = points.dim();
    if j == 0 {
        return Err(Error::usage("cluster count must be positive"));
    }
    if n < j {
        return Err(Error::usage(format!("{n} points cannot form {j} clusters")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, j, &mut rng);
    let mut trace = Vec::new();

    for _ in 0..opts.max_iter {
        let (labels, dists) = assign(points, &centroids);
        trace.push(dists.iter().sum());

        let mut sums = Array2::<f64>::zeros((j, d));
        let mut counts = vec![0usize; j];
        for (p, &l) in points.rows().into_iter().zip(&labels) {
            sums.row_mut(l).scaled_add(1.0, &p);
            counts[l] += 1;
        }
        let mut next = centroids.clone();
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..j {
            if counts[c] > 0 {
                next.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            } else {
                // re-seed on the point farthest from its centroid
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= j");
                taken.push(far);
                next.row_mut(c).assign(&points.row(far));
            }
        }
        let shift = centroids
            .rows()
            .into_iter()
            .zip(next.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < opts.tol {
            break;
        }
    }

    let (assignments, dists) = assign(points, &centroids);
    let inertia = dists.iter().sum();
    trace.push(inertia);
    Ok(ClusterModel {
        centroids,
        assignments,
        inertia,
        inertia_trace: trace,
    })
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.centroids.nrows()
    }

    /// Nearest-centroid labels for new points.
    pub fn predict(&self, points: &Array2<f64>) -> Result<Vec<usize>> {
        if points.ncols() != self.centroids.ncols() {
            return Err(Error::usage(format!(
                "points have {} columns, centroids {}",
                points.ncols(),
                self.centroids.ncols()
            )));
        }
        Ok(assign(points, &self.centroids).0)
    }

    pub fn predict_one(&self, point: &Array1<f64>) -> usize {
        assign(&point.clone().insert_axis(Axis(0)), &self.centroids).0[0]
    }
}
