use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::LstmLayerParams;
use crate::error::{Error, Result};

/// Gate blocks per layer: input, forget, cell candidate, output.
pub const GATES: usize = 4;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step for a single sample.
pub fn lstm_cell_step(
    params: &LstmLayerParams,
    x: ArrayView1<'_, f64>,
    h_prev: ArrayView1<'_, f64>,
    c_prev: ArrayView1<'_, f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let hidden = params.hidden();
    if x.len() != params.input_dim() || h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(Error::usage(format!(
            "lstm step expects x {}, h/c {}; got {}, {}, {}",
            params.input_dim(),
            hidden,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let as_row = |v: ArrayView1<'_, f64>| v.insert_axis(Axis(0)).to_owned();
    let step = step_forward(params, as_row(x), &as_row(h_prev), &as_row(c_prev));
    Ok((step.h.row(0).to_owned(), step.c.row(0).to_owned()))
}

/// Activations of one batched step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    /// Layer input after any dropout mask, `B x D`.
    pub x: Array2<f64>,
    /// Post-activation gates `[i | f | g | o]`, `B x 4H`.
    pub act: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

pub(crate) fn step_forward(
    params: &LstmLayerParams,
    x: Array2<f64>,
    h_prev: &Array2<f64>,
    c_prev: &Array2<f64>,
) -> StepCache {
    let batch = x.nrows();
    let hidden = params.hidden();
    let mut act = params
        .b
        .broadcast((batch, GATES * hidden))
        .expect("bias width")
        .to_owned();
    general_mat_mul(1.0, &x, &params.w.t(), 1.0, &mut act);
    general_mat_mul(1.0, h_prev, &params.u.t(), 1.0, &mut act);

    let mut c = Array2::zeros((batch, hidden));
    let mut tanh_c = Array2::zeros((batch, hidden));
    let mut h = Array2::zeros((batch, hidden));
    for r in 0..batch {
        let a = act.row_mut(r).into_slice().expect("contiguous");
        let cp = c_prev.row(r);
        let (cr, tr, hr) = (
            c.row_mut(r).into_slice().expect("contiguous"),
            tanh_c.row_mut(r).into_slice().expect("contiguous"),
            h.row_mut(r).into_slice().expect("contiguous"),
        );
        for j in 0..hidden {
            let i = sigmoid(a[j]);
            let f = sigmoid(a[hidden + j]);
            let g = a[2 * hidden + j].tanh();
            let o = sigmoid(a[3 * hidden + j]);
            a[j] = i;
            a[hidden + j] = f;
            a[2 * hidden + j] = g;
            a[3 * hidden + j] = o;
            cr[j] = f * cp[j] + i * g;
            tr[j] = cr[j].tanh();
            hr[j] = o * tr[j];
        }
    }
    StepCache { x, act, c, tanh_c, h }
}

/// Backpropagates one step.
///
/// `dh` is the total gradient reaching this step's hidden output and `dc`
/// the gradient carried into its cell state; on return `dc` holds the
/// gradient for the previous cell state. Parameter gradients accumulate into
/// `grads`. Returns `(dx, dh_prev)`.
pub(crate) fn step_backward(
    params: &LstmLayerParams,
    cache: &StepCache,
    h_prev: &Array2<f64>,
    c_prev: &Array2<f64>,
    dh: &Array2<f64>,
    dc: &mut Array2<f64>,
    grads: &mut LstmLayerParams,
) -> (Array2<f64>, Array2<f64>) {
    let batch = dh.nrows();
    let hidden = params.hidden();
    let mut dpre = Array2::zeros((batch, GATES * hidden));
    for r in 0..batch {
        let a = cache.act.row(r);
        let tc = cache.tanh_c.row(r);
        let cp = c_prev.row(r);
        let dhr = dh.row(r);
        let mut dcr = dc.row_mut(r);
        let mut d = dpre.row_mut(r);
        for j in 0..hidden {
            let (i, f, g, o) = (a[j], a[hidden + j], a[2 * hidden + j], a[3 * hidden + j]);
            let d_o = dhr[j] * tc[j];
            let dcell = dcr[j] + dhr[j] * o * (1.0 - tc[j] * tc[j]);
            d[j] = dcell * g * i * (1.0 - i);
            d[hidden + j] = dcell * cp[j] * f * (1.0 - f);
            d[2 * hidden + j] = dcell * i * (1.0 - g * g);
            d[3 * hidden + j] = d_o * o * (1.0 - o);
            dcr[j] = dcell * f;
        }
    }
    general_mat_mul(1.0, &dpre.t(), &cache.x, 1.0, &mut grads.w);
    general_mat_mul(1.0, &dpre.t(), h_prev, 1.0, &mut grads.u);
    grads.b += &dpre.sum_axis(Axis(0));
    let dx = dpre.dot(&params.w);
    let dh_prev = dpre.dot(&params.u);
    (dx, dh_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_layer(input: usize, hidden: usize, seed: u64) -> LstmLayerParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = LstmLayerParams::zeros(input, hidden);
        p.w.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        p.u.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        p.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        p
    }

    /// Scalar-loop reference of the gate equations.
    fn oracle(p: &LstmLayerParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = h.len();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |gate: usize, j: usize| {
            let row = gate * hd + j;
            let mut acc = p.b[row];
            for (d, xv) in x.iter().enumerate() {
                acc += p.w[[row, d]] * xv;
            }
            for (d, hv) in h.iter().enumerate() {
                acc += p.u[[row, d]] * hv;
            }
            acc
        };
        let mut h_out = vec![0.0; hd];
        let mut c_out = vec![0.0; hd];
        for j in 0..hd {
            let i = sig(pre(0, j));
            let f = sig(pre(1, j));
            let g = pre(2, j).tanh();
            let o = sig(pre(3, j));
            c_out[j] = f * c[j] + i * g;
            h_out[j] = o * c_out[j].tanh();
        }
        (h_out, c_out)
    }

    #[test]
    fn zero_weights_halve_the_cell() {
        let p = LstmLayerParams::zeros(2, 3);
        let v = array![1.0, -2.0, 0.5];
        let (h, c) = lstm_cell_step(&p, array![3.0, 4.0].view(), array![0.0, 0.0, 0.0].view(), v.view()).unwrap();
        for j in 0..3 {
            assert_eq!(c[j], 0.5 * v[j]);
            assert_eq!(h[j], 0.5 * (0.5 * v[j]).tanh());
        }
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let p = LstmLayerParams::zeros(2, 3);
        let z = Array1::zeros(3);
        let (h, c) = lstm_cell_step(&p, array![1.0, 1.0].view(), z.view(), z.view()).unwrap();
        assert!(h.iter().chain(c.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn matches_scalar_oracle() {
        let p = random_layer(4, 5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut vec = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (x, h, c) = (vec(4), vec(5), vec(5));
        let (h1, c1) = lstm_cell_step(
            &p,
            Array1::from(x.clone()).view(),
            Array1::from(h.clone()).view(),
            Array1::from(c.clone()).view(),
        )
        .unwrap();
        let (ho, co) = oracle(&p, &x, &h, &c);
        for j in 0..5 {
            assert!((h1[j] - ho[j]).abs() < 1e-12);
            assert!((c1[j] - co[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_usage_error() {
        let p = LstmLayerParams::zeros(2, 3);
        let z = Array1::zeros(3);
        assert!(lstm_cell_step(&p, z.view(), z.view(), z.view()).is_err());
    }
}
