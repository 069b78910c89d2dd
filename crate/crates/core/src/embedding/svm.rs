//! Soft-margin RBF support vector classifier, one-vs-one over cluster
//! labels, trained by sequential minimal optimization.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmOptions {
    pub gamma: f64,
    pub c: f64,
    /// Maximal KKT violation accepted at convergence.
    pub tol: f64,
    /// SMO iteration cap per pairwise problem; `None` scales with size.
    pub max_iter: Option<usize>,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            gamma: 4.0,
            c: 1.0,
            tol: 1e-3,
            max_iter: None,
        }
    }
}

/// Binary machine separating `positive` (decision > 0) from `negative`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSvm {
    pub positive: usize,
    pub negative: usize,
    pub support_vectors: Array2<f64>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    /// Raw dual variables, all in `[0, C]`.
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfSvmModel {
    pub gamma: f64,
    pub c: f64,
    pub dim: usize,
    /// Sorted ascending.
    pub classes: Vec<usize>,
    pub machines: Vec<PairwiseSvm>,
}

#[inline]
fn rbf(gamma: f64, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// `exp(-gamma * |a - b|^2)`.
pub fn rbf_kernel(gamma: f64, a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    rbf(gamma, a.view(), b.view())
}

const TAU: f64 = 1e-12;

/// Solves the binary dual for labels `y` in {+1, -1}. Returns
/// `(alpha, bias, iterations)`.
fn smo(points: &Array2<f64>, y: &[f64], opts: &SvmOptions) -> Result<(Vec<f64>, f64, usize)> {
    let n = y.len();
    let c = opts.c;
    let mut kernel = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let k = rbf(opts.gamma, points.row(i), points.row(j));
            kernel[[i, j]] = k;
            kernel[[j, i]] = k;
        }
    }
    let q = |i: usize, j: usize| y[i] * y[j] * kernel[[i, j]];

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let cap = opts.max_iter.unwrap_or(100_000.max(100 * n));
    let mut iter = 0;
    loop {
        // maximal violating pair, second-order choice of the partner
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            if up && v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
                if !low {
                    continue;
                }
                let v = -y[t] * grad[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let a = kernel[[i, i]] + kernel[[t, t]] - 2.0 * kernel[[i, t]];
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gmax - gmin >= opts.tol => (i, j),
            _ => break,
        };
        if iter >= cap {
            return Err(Error::Numerical {
                param: "svm".into(),
                message: format!("SMO did not converge in {cap} iterations"),
            });
        }
        iter += 1;

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (kernel[[i, i]] + kernel[[j, j]] + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (kernel[[i, i]] + kernel[[j, j]] - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (dai, daj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        for t in 0..n {
            grad[t] += q(t, i) * dai + q(t, j) * daj;
        }
    }

    // bias from free vectors, else the midpoint of the feasible interval
    let mut free_sum = 0.0;
    let mut free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += yg;
            free += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok((alpha, -rho, iter))
}

impl PairwiseSvm {
    pub fn decision(&self, gamma: f64, x: ArrayView1<'_, f64>) -> f64 {
        self.support_vectors
            .rows()
            .into_iter()
            .zip(&self.dual_coef)
            .map(|(sv, &coef)| coef * rbf(gamma, sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// `|sum_i alpha_i y_i|`, zero at an exactly feasible point.
    pub fn equality_residual(&self) -> f64 {
        self.dual_coef.iter().sum::<f64>().abs()
    }
}

/// Fits one binary machine per class pair.
pub fn fit_svm(points: &Array2<f64>, labels: &[usize], opts: SvmOptions) -> Result<RbfSvmModel> {
    if points.nrows() != labels.len() {
        return Err(Error::usage(format!(
            "{} points but {} labels",
            points.nrows(),
            labels.len()
        )));
    }
    if !(opts.gamma > 0.0) || !(opts.c > 0.0) {
        return Err(Error::usage("gamma and C must be positive"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::usage("SVM needs at least two classes"));
    }
    let mut machines = Vec::new();
    for (a_idx, &a) in classes.iter().enumerate() {
        for &b in &classes[a_idx + 1..] {
            let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == a || labels[i] == b).collect();
            let sub = points.select(Axis(0), &rows);
            let y: Vec<f64> = rows.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
            let (alpha, bias, iterations) = smo(&sub, &y, &opts)?;
            let sv: Vec<usize> = (0..rows.len()).filter(|&i| alpha[i] > 0.0).collect();
            machines.push(PairwiseSvm {
                positive: a,
                negative: b,
                support_vectors: sub.select(Axis(0), &sv),
                dual_coef: sv.iter().map(|&i| alpha[i] * y[i]).collect(),
                alpha: sv.iter().map(|&i| alpha[i]).collect(),
                bias,
                iterations,
            });
        }
    }
    Ok(RbfSvmModel {
        gamma: opts.gamma,
        c: opts.c,
        dim: points.ncols(),
        classes,
        machines,
    })
}

impl RbfSvmModel {
    /// One-vote-per-pair majority; ties go to the lowest class.
    pub fn predict_one(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut votes = vec![0usize; self.classes.len()];
        let index = |c: usize| self.classes.binary_search(&c).expect("known class");
        for m in &self.machines {
            let winner = if m.decision(self.gamma, x) > 0.0 {
                m.positive
            } else {
                m.negative
            };
            votes[index(winner)] += 1;
        }
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        self.classes[best]
    }
}

/// Labels for every row of `points`.
pub fn classify(svm: &RbfSvmModel, points: &Array2<f64>) -> Result<Vec<usize>> {
    if points.ncols() != svm.dim {
        return Err(Error::usage(format!(
            "points have {} columns, SVM expects {}",
            points.ncols(),
            svm.dim
        )));
    }
    Ok(points.rows().into_iter().map(|p| svm.predict_one(p)).collect())
}

/// Labels over a regular lattice, for plotting decision regions.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `labels[[iy, ix]]` is the class at `(xs[ix], ys[iy])`.
    pub labels: Array2<usize>,
}

/// Classifies a `resolution x resolution` lattice over
/// `[x_min, x_max) x [y_min, y_max)`, points at `min + i * width / resolution`.
pub fn decision_grid(svm: &RbfSvmModel, bounds: [f64; 4], resolution: usize) -> Result<DecisionGrid> {
    if svm.dim != 2 {
        return Err(Error::usage(format!("decision grid needs a 2-D model, got {}-D", svm.dim)));
    }
    if resolution == 0 {
        return Err(Error::usage("resolution must be positive"));
    }
    let [x0, x1, y0, y1] = bounds;
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::usage("empty decision grid bounds"));
    }
    let axis = |lo: f64, hi: f64| {
        let step = (hi - lo) / resolution as f64;
        (0..resolution).map(|i| lo + i as f64 * step).collect::<Vec<_>>()
    };
    let xs = axis(x0, x1);
    let ys = axis(y0, y1);
    let mut labels = Array2::zeros((resolution, resolution));
    for (iy, &y) in ys.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            labels[[iy, ix]] = svm.predict_one(Array1::from(vec![x, y]).view());
        }
    }
    Ok(DecisionGrid { xs, ys, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn check_dual(model: &RbfSvmModel) {
        for m in &model.machines {
            assert!(m.alpha.iter().all(|&a| (0.0..=model.c).contains(&a)));
            assert!(m.equality_residual() < 1e-6, "{}", m.equality_residual());
        }
    }

    #[test]
    fn kernel_of_identical_points_is_one() {
        let x = array![0.3, -7.0, 2.0];
        assert_eq!(rbf_kernel(4.0, &x, &x), 1.0);
    }

    #[test]
    fn four_separable_points() {
        let pts = array![[0.0, 0.0], [0.2, 0.1], [1.0, 1.0], [0.9, 1.1]];
        let labels = [0, 0, 1, 1];
        let m = fit_svm(&pts, &labels, SvmOptions::default()).unwrap();
        check_dual(&m);
        assert_eq!(classify(&m, &pts).unwrap(), labels);
        // every lattice point closer to one pair than the other follows it
        let grid = decision_grid(&m, [-0.5, 1.5, -0.5, 1.5], 20).unwrap();
        for (iy, &y) in grid.ys.iter().enumerate() {
            for (ix, &x) in grid.xs.iter().enumerate() {
                let d0 = (x - 0.1f64).powi(2) + (y - 0.05f64).powi(2);
                let d1 = (x - 0.95f64).powi(2) + (y - 1.05f64).powi(2);
                if d0 < 0.05 {
                    assert_eq!(grid.labels[[iy, ix]], 0);
                }
                if d1 < 0.05 {
                    assert_eq!(grid.labels[[iy, ix]], 1);
                }
            }
        }
    }

    fn rings(seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (label, radius) in [(0usize, 1.0f64), (1, 3.0)] {
            for _ in 0..100 {
                let theta = rng.random_range(0.0..2.0 * PI);
                let r = radius + rng.random_range(-0.1..0.1);
                rows.extend([r * theta.cos(), r * theta.sin()]);
                labels.push(label);
            }
        }
        (Array2::from_shape_vec((200, 2), rows).unwrap(), labels)
    }

    #[test]
    fn separates_concentric_rings() {
        let (pts, labels) = rings(4);
        let m = fit_svm(&pts, &labels, SvmOptions::default()).unwrap();
        check_dual(&m);
        let pred = classify(&m, &pts).unwrap();
        let hits = pred.iter().zip(&labels).filter(|(a, b)| a == b).count();
        assert!(hits as f64 / 200.0 >= 0.99, "{hits}");
    }

    #[test]
    fn support_vector_of_hard_margin_fit_keeps_its_class() {
        let pts = array![[0.0, 0.0], [0.5, 0.0], [2.0, 2.0], [2.5, 2.0]];
        let labels = [3, 3, 5, 5];
        let opts = SvmOptions { c: 1e6, ..Default::default() };
        let m = fit_svm(&pts, &labels, opts).unwrap();
        let machine = &m.machines[0];
        for (sv, &coef) in machine.support_vectors.rows().into_iter().zip(&machine.dual_coef) {
            let class = if coef > 0.0 { 3 } else { 5 };
            assert_eq!(m.predict_one(sv), class);
        }
    }

    #[test]
    fn three_classes_vote() {
        let pts = array![[0.0, 0.0], [0.1, 0.0], [3.0, 0.0], [3.1, 0.0], [0.0, 3.0], [0.0, 3.1]];
        let labels = [0, 0, 1, 1, 2, 2];
        let m = fit_svm(&pts, &labels, SvmOptions::default()).unwrap();
        assert_eq!(m.machines.len(), 3);
        assert_eq!(classify(&m, &pts).unwrap(), labels);
        check_dual(&m);
    }

    #[test]
    fn usage_errors() {
        let pts = array![[0.0, 0.0], [1.0, 1.0]];
        assert!(fit_svm(&pts, &[1, 1], SvmOptions::default()).is_err());
        let m = fit_svm(&pts, &[0, 1], SvmOptions::default()).unwrap();
        assert!(classify(&m, &array![[1.0, 2.0, 3.0]]).is_err());
        let m3 = fit_svm(&array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]], &[0, 1], SvmOptions::default()).unwrap();
        assert!(decision_grid(&m3, [0.0, 1.0, 0.0, 1.0], 4).is_err());
    }

    #[test]
    fn iteration_cap_is_a_training_error() {
        let (pts, labels) = rings(1);
        let opts = SvmOptions { max_iter: Some(3), ..Default::default() };
        assert!(matches!(fit_svm(&pts, &labels, opts), Err(Error::Numerical { .. })));
    }

    #[test]
    fn constant_model_gives_uniform_grid() {
        // far-away training points: the bias alone decides the lattice
        let pts = array![[100.0, 100.0], [100.0, 101.0], [100.0, 102.0], [130.0, 130.0]];
        let m = fit_svm(&pts, &[0, 0, 0, 1], SvmOptions::default()).unwrap();
        let grid = decision_grid(&m, [-1.0, 1.0, -1.0, 1.0], 8).unwrap();
        let first = grid.labels[[0, 0]];
        assert!(grid.labels.iter().all(|&l| l == first));
    }

    #[test]
    fn blob_grid_has_both_labels_and_nests() {
        let pts = array![[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [2.0, 2.0], [2.1, 1.8], [1.9, 2.2]];
        let m = fit_svm(&pts, &[0, 0, 0, 1, 1, 1], SvmOptions::default()).unwrap();
        let coarse = decision_grid(&m, [-1.0, 3.0, -1.0, 3.0], 16).unwrap();
        let fine = decision_grid(&m, [-1.0, 3.0, -1.0, 3.0], 32).unwrap();
        assert!(coarse.labels.iter().any(|&l| l == 0));
        assert!(coarse.labels.iter().any(|&l| l == 1));
        for iy in 0..16 {
            for ix in 0..16 {
                assert_eq!(coarse.xs[ix], fine.xs[2 * ix]);
                assert_eq!(coarse.labels[[iy, ix]], fine.labels[[2 * iy, 2 * ix]]);
            }
        }
    }

    proptest! {
        #[test]
        fn translation_invariant(shift in -8i32..8, seed in 0u64..200) {
            // quarter-unit lattice: shifting by an integer is exact
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for i in 0..24 {
                let label = i % 2;
                let base = if label == 0 { 0 } else { 6 };
                rows.push((base + rng.random_range(-4..=4)) as f64 * 0.25);
                rows.push(rng.random_range(-4..=4) as f64 * 0.25);
                labels.push(label);
            }
            let pts = Array2::from_shape_vec((24, 2), rows).unwrap();
            let moved = &pts + shift as f64;
            let queries = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 3 + j * 5) % 13) as f64 * 0.25 - 1.0);
            let a = classify(&fit_svm(&pts, &labels, SvmOptions::default()).unwrap(), &queries).unwrap();
            let b = classify(&fit_svm(&moved, &labels, SvmOptions::default()).unwrap(), &(&queries + shift as f64)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn classify_is_pointwise(seed in 0u64..100) {
            let (pts, labels) = rings(seed);
            let m = fit_svm(&pts, &labels, SvmOptions::default()).unwrap();
            let mut perm: Vec<usize> = (0..200).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
            let direct = classify(&m, &pts).unwrap();
            let permuted = classify(&m, &pts.select(Axis(0), &perm)).unwrap();
            for (pos, &orig) in perm.iter().enumerate() {
                prop_assert_eq!(permuted[pos], direct[orig]);
            }
        }
    }
}
