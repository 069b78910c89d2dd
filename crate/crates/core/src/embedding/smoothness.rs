use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Number of random reference pairs drawn by [`trajectory_smoothness`].
pub const SMOOTHNESS_PAIRS: usize = 10_000;

const DEFAULT_SEED: u64 = 0x5eed;

fn distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean step length along the row sequence divided by the mean distance
/// between random non-adjacent rows. Near 0 for a smooth path, near 1 for
/// an unordered cloud.
pub fn trajectory_smoothness(points: &Array2<f64>) -> Result<f64> {
    trajectory_smoothness_with(points, SMOOTHNESS_PAIRS, DEFAULT_SEED)
}

pub fn trajectory_smoothness_with(points: &Array2<f64>, pairs: usize, seed: u64) -> Result<f64> {
    let n = points.nrows();
    if n < 3 {
        return Err(Error::usage(format!("smoothness needs at least 3 vectors, got {n}")));
    }
    if pairs == 0 {
        return Err(Error::usage("pair count must be positive"));
    }
    let consecutive = (1..n)
        .map(|i| distance(points.row(i - 1), points.row(i)))
        .sum::<f64>()
        / (n - 1) as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut drawn = 0;
    while drawn < pairs {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i.abs_diff(j) <= 1 {
            continue;
        }
        total += distance(points.row(i), points.row(j));
        drawn += 1;
    }
    let reference = total / pairs as f64;
    if reference == 0.0 {
        return Ok(0.0);
    }
    Ok(consecutive / reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_vectors_score_zero() {
        let pts = Array2::from_elem((10, 4), 2.5);
        assert_eq!(trajectory_smoothness(&pts).unwrap(), 0.0);
    }

    #[test]
    fn iid_vectors_score_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = Array2::from_shape_simple_fn((1000, 16), || rng.sample::<f64, _>(StandardNormal));
        let s = trajectory_smoothness(&pts).unwrap();
        assert!((s - 1.0).abs() < 0.15, "{s}");
    }

    #[test]
    fn slow_walk_is_smooth() {
        let pts = Array2::from_shape_fn((500, 3), |(i, j)| (i as f64 * 0.01 + j as f64).sin());
        assert!(trajectory_smoothness(&pts).unwrap() < 0.05);
    }

    #[test]
    fn too_few_vectors() {
        assert!(trajectory_smoothness(&Array2::zeros((2, 3))).is_err());
    }
}
