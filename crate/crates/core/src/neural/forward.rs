use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{step_backward, step_forward, StepCache};
use super::params::{AutoencoderParams, Dense};
use crate::dataset::WindowSample;
use crate::error::{Error, Result};

/// Fixed-length summary of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    pub values: Array1<f64>,
    pub window_start: usize,
}

/// Inverted dropout on non-recurrent layer inputs.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn mask(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let rng = &mut *self.rng;
        Array2::from_shape_fn((rows, cols), |_| {
            if rng.random_bool(keep) {
                scale
            } else {
                0.0
            }
        })
    }
}

fn masked(x: Array2<f64>, dropout: &mut Option<&mut Dropout<'_>>) -> (Array2<f64>, Option<Array2<f64>>) {
    match dropout {
        Some(d) => {
            let m = d.mask(x.nrows(), x.ncols());
            (x * &m, Some(m))
        }
        None => (x, None),
    }
}

fn affine(x: &Array2<f64>, dense: &Dense) -> Array2<f64> {
    let dim = (x.nrows(), dense.bias.len());
    let mut y = dense.bias.broadcast(dim).expect("bias width").to_owned();
    general_mat_mul(1.0, x, &dense.weight.t(), 1.0, &mut y);
    y
}

fn affine_backward(dy: &Array2<f64>, x: &Array2<f64>, dense: &Dense, grads: &mut Dense) -> Array2<f64> {
    general_mat_mul(1.0, &dy.t(), x, 1.0, &mut grads.weight);
    grads.bias += &dy.sum_axis(Axis(0));
    dy.dot(&dense.weight)
}

pub(crate) struct EncoderCache {
    steps: Vec<Vec<StepCache>>,
    masks: Vec<Vec<Option<Array2<f64>>>>,
    pub context: Array2<f64>,
}

pub(crate) struct DecoderCache {
    h0: Vec<Array2<f64>>,
    c0: Vec<Array2<f64>>,
    steps: Vec<Vec<StepCache>>,
    masks: Vec<Vec<Option<Array2<f64>>>>,
    /// Per-step outputs, each `B x K`.
    pub outputs: Vec<Array2<f64>>,
}

/// Encoder over time-major inputs (`T` matrices of `B x P`).
pub(crate) fn encoder_forward(
    params: &AutoencoderParams,
    inputs: &[Array2<f64>],
    mut dropout: Option<&mut Dropout<'_>>,
) -> EncoderCache {
    let batch = inputs[0].nrows();
    let hidden = params.hidden();
    let n = params.n_layers();
    let mut steps: Vec<Vec<StepCache>> = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for (l, layer) in params.encoder.iter().enumerate() {
        let mut h = Array2::zeros((batch, hidden));
        let mut c = Array2::zeros((batch, hidden));
        let mut layer_steps = Vec::with_capacity(inputs.len());
        let mut layer_masks = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let x = if l == 0 {
                inputs[t].clone()
            } else {
                steps[l - 1][t].h.clone()
            };
            let (x, m) = masked(x, &mut dropout);
            let step = step_forward(layer, x, &h, &c);
            h = step.h.clone();
            c = step.c.clone();
            layer_steps.push(step);
            layer_masks.push(m);
        }
        steps.push(layer_steps);
        masks.push(layer_masks);
    }
    let top = &steps[n - 1][inputs.len() - 1].h;
    let context = affine(top, &params.context);
    EncoderCache {
        steps,
        masks,
        context,
    }
}

/// Closed-loop decoder: zero input at the first step, then its own previous
/// output.
pub(crate) fn decoder_forward(
    params: &AutoencoderParams,
    context: &Array2<f64>,
    seq_len: usize,
    mut dropout: Option<&mut Dropout<'_>>,
) -> DecoderCache {
    let batch = context.nrows();
    let n = params.n_layers();
    let h0: Vec<_> = params.decoder_init.iter().map(|d| affine(context, &d.hidden)).collect();
    let c0: Vec<_> = params.decoder_init.iter().map(|d| affine(context, &d.cell)).collect();
    let mut h = h0.clone();
    let mut c = c0.clone();
    let mut steps: Vec<Vec<StepCache>> = (0..n).map(|_| Vec::with_capacity(seq_len)).collect();
    let mut masks: Vec<Vec<_>> = (0..n).map(|_| Vec::with_capacity(seq_len)).collect();
    let mut outputs = Vec::with_capacity(seq_len);
    let mut feed = Array2::zeros((batch, params.output_dim()));
    for _ in 0..seq_len {
        let mut x = feed;
        for (l, layer) in params.decoder.iter().enumerate() {
            let (xm, m) = masked(x, &mut dropout);
            let step = step_forward(layer, xm, &h[l], &c[l]);
            h[l] = step.h.clone();
            c[l] = step.c.clone();
            x = step.h.clone();
            steps[l].push(step);
            masks[l].push(m);
        }
        let y = affine(&x, &params.output);
        feed = y.clone();
        outputs.push(y);
    }
    DecoderCache {
        h0,
        c0,
        steps,
        masks,
        outputs,
    }
}

fn apply_mask(dx: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => dx * m,
        None => dx,
    }
}

/// Gradients of the mean squared error over every `B * T * K` output entry.
pub(crate) fn backward_batch(
    params: &AutoencoderParams,
    inputs: &[Array2<f64>],
    enc: &EncoderCache,
    dec: &DecoderCache,
    targets: &[Array2<f64>],
) -> (f64, AutoencoderParams) {
    let n = params.n_layers();
    let seq_len = targets.len();
    let batch = targets[0].nrows();
    let hidden = params.hidden();
    let k = params.output_dim();
    let count = (batch * seq_len * k) as f64;
    let mut grads = params.zeros_like();

    let mut loss = 0.0;
    let zeros_h = Array2::<f64>::zeros((batch, hidden));

    // decoder, newest step first
    let mut dh_rec: Vec<Array2<f64>> = (0..n).map(|_| zeros_h.clone()).collect();
    let mut dc_rec: Vec<Array2<f64>> = (0..n).map(|_| zeros_h.clone()).collect();
    let mut dy_feed = Array2::<f64>::zeros((batch, k));
    for t in (0..seq_len).rev() {
        let diff = &dec.outputs[t] - &targets[t];
        loss += diff.iter().map(|d| d * d).sum::<f64>();
        let dy = diff * (2.0 / count) + &dy_feed;
        let mut dh_above = affine_backward(&dy, &dec.steps[n - 1][t].h, &params.output, &mut grads.output);
        for l in (0..n).rev() {
            let dh = &dh_above + &dh_rec[l];
            let (h_prev, c_prev) = if t == 0 {
                (&dec.h0[l], &dec.c0[l])
            } else {
                (&dec.steps[l][t - 1].h, &dec.steps[l][t - 1].c)
            };
            let (dx, dh_prev) = step_backward(
                &params.decoder[l],
                &dec.steps[l][t],
                h_prev,
                c_prev,
                &dh,
                &mut dc_rec[l],
                &mut grads.decoder[l],
            );
            dh_rec[l] = dh_prev;
            let dx = apply_mask(dx, &dec.masks[l][t]);
            if l > 0 {
                dh_above = dx;
            } else {
                // input at step t was the output of step t - 1
                dy_feed = dx;
            }
        }
    }

    // initial decoder states back to the context
    let mut dcontext = Array2::<f64>::zeros((batch, hidden));
    for l in 0..n {
        let init = &params.decoder_init[l];
        let grad = &mut grads.decoder_init[l];
        dcontext += &affine_backward(&dh_rec[l], &enc.context, &init.hidden, &mut grad.hidden);
        dcontext += &affine_backward(&dc_rec[l], &enc.context, &init.cell, &mut grad.cell);
    }
    let steps = inputs.len();
    let top_final = &enc.steps[n - 1][steps - 1].h;
    let dtop = affine_backward(&dcontext, top_final, &params.context, &mut grads.context);

    // encoder, top layer first
    let mut from_above: Vec<Option<Array2<f64>>> = (0..steps).map(|_| None).collect();
    from_above[steps - 1] = Some(dtop);
    for l in (0..n).rev() {
        let mut dh_rec = zeros_h.clone();
        let mut dc_rec = zeros_h.clone();
        let mut to_below: Vec<Option<Array2<f64>>> = (0..steps).map(|_| None).collect();
        for t in (0..steps).rev() {
            let dh = match from_above[t].take() {
                Some(d) => d + &dh_rec,
                None => dh_rec.clone(),
            };
            let (h_prev, c_prev) = if t == 0 {
                (&zeros_h, &zeros_h)
            } else {
                (&enc.steps[l][t - 1].h, &enc.steps[l][t - 1].c)
            };
            let (dx, dh_prev) = step_backward(
                &params.encoder[l],
                &enc.steps[l][t],
                h_prev,
                c_prev,
                &dh,
                &mut dc_rec,
                &mut grads.encoder[l],
            );
            dh_rec = dh_prev;
            if l > 0 {
                to_below[t] = Some(apply_mask(dx, &enc.masks[l][t]));
            }
        }
        from_above = to_below;
    }

    (loss / count, grads)
}

/// Stacks windows into time-major batch matrices, optionally keeping only
/// `channels`.
pub(crate) fn time_major(windows: &[&WindowSample], channels: Option<&[usize]>) -> Vec<Array2<f64>> {
    let seq_len = windows[0].len();
    let width = channels.map_or(windows[0].n_channels(), <[usize]>::len);
    (0..seq_len)
        .map(|t| {
            let mut m = Array2::zeros((windows.len(), width));
            for (b, w) in windows.iter().enumerate() {
                let row = w.values.row(t);
                let mut dst = m.row_mut(b);
                match channels {
                    Some(cs) => {
                        for (d, &c) in dst.iter_mut().zip(cs) {
                            *d = row[c];
                        }
                    }
                    None => dst.assign(&row),
                }
            }
            m
        })
        .collect()
}

fn check_window(params: &AutoencoderParams, window: &WindowSample) -> Result<()> {
    if window.n_channels() != params.input_dim() {
        return Err(Error::usage(format!(
            "window has {} channels, model expects {}",
            window.n_channels(),
            params.input_dim()
        )));
    }
    if window.is_empty() {
        return Err(Error::usage("window has no rows"));
    }
    Ok(())
}

/// Context vector of one window.
pub fn encode(
    params: &AutoencoderParams,
    window: &WindowSample,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<ContextVector> {
    check_window(params, window)?;
    let inputs = time_major(&[window], None);
    let enc = encoder_forward(params, &inputs, dropout);
    Ok(ContextVector {
        values: enc.context.row(0).to_owned(),
        window_start: window.start_index,
    })
}

/// Context vectors of many windows with dropout disabled, in input order.
pub fn encode_batch(params: &AutoencoderParams, windows: &[WindowSample]) -> Result<Vec<ContextVector>> {
    const CHUNK: usize = 256;
    let seq_len = windows.first().map_or(0, WindowSample::len);
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(CHUNK) {
        for w in chunk {
            check_window(params, w)?;
            if w.len() != seq_len {
                return Err(Error::usage("windows differ in length"));
            }
        }
        let refs: Vec<_> = chunk.iter().collect();
        let enc = encoder_forward(params, &time_major(&refs, None), None);
        for (w, row) in chunk.iter().zip(enc.context.rows()) {
            out.push(ContextVector {
                values: row.to_owned(),
                window_start: w.start_index,
            });
        }
    }
    Ok(out)
}

/// `seq_len x K` reconstruction from a context vector.
pub fn decode(params: &AutoencoderParams, context: &ContextVector, seq_len: usize) -> Result<Array2<f64>> {
    if context.values.len() != params.hidden() {
        return Err(Error::usage(format!(
            "context has {} values, model expects {}",
            context.values.len(),
            params.hidden()
        )));
    }
    let ctx = context.values.clone().insert_axis(Axis(0));
    let dec = decoder_forward(params, &ctx, seq_len, None);
    Ok(stack_rows(&dec.outputs, 0))
}

/// Encode then decode with dropout disabled.
pub fn reconstruct(params: &AutoencoderParams, window: &WindowSample) -> Result<Array2<f64>> {
    let ctx = encode(params, window, None)?;
    decode(params, &ctx, window.len())
}

fn stack_rows(steps: &[Array2<f64>], b: usize) -> Array2<f64> {
    let k = steps[0].ncols();
    let mut out = Array2::zeros((steps.len(), k));
    for (t, s) in steps.iter().enumerate() {
        out.row_mut(t).assign(&s.row(b));
    }
    out
}

/// Mean of squared differences over all entries.
pub fn mse_loss(output: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    if output.dim() != target.dim() {
        return Err(Error::usage(format!(
            "output {:?} and target {:?} differ in shape",
            output.dim(),
            target.dim()
        )));
    }
    if output.is_empty() {
        return Err(Error::usage("empty matrices"));
    }
    let sum: f64 = output.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / output.len() as f64)
}

/// Loss and exact gradients for one window against `target`, the window's
/// `T x K` designated output channels.
pub fn backward(
    params: &AutoencoderParams,
    window: &WindowSample,
    target: &Array2<f64>,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<(f64, AutoencoderParams)> {
    check_window(params, window)?;
    if target.dim() != (window.len(), params.output_dim()) {
        return Err(Error::usage(format!(
            "target {:?} does not match ({}, {})",
            target.dim(),
            window.len(),
            params.output_dim()
        )));
    }
    let inputs = time_major(&[window], None);
    let targets: Vec<_> = target.rows().into_iter().map(|r| r.to_owned().insert_axis(Axis(0))).collect();
    batch_gradients(params, &inputs, &targets, dropout)
}

pub(crate) fn batch_gradients(
    params: &AutoencoderParams,
    inputs: &[Array2<f64>],
    targets: &[Array2<f64>],
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<(f64, AutoencoderParams)> {
    let enc = encoder_forward(params, inputs, dropout.as_deref_mut());
    let dec = decoder_forward(params, &enc.context, targets.len(), dropout);
    let (loss, grads) = backward_batch(params, inputs, &enc, &dec, targets);
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::Numerical {
            param: name,
            message: "non-finite gradient".into(),
        });
    }
    Ok((loss, grads))
}

/// Rescales `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut AutoencoderParams, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{LstmLayerParams, ModelConfig};
    use rand::SeedableRng;

    fn window(t: usize, p: usize, seed: u64) -> WindowSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        WindowSample {
            values: Array2::from_shape_fn((t, p), |_| rng.random_range(-1.0..1.0)),
            start_index: seed as usize,
        }
    }

    fn random_params(cfg: &ModelConfig, seed: u64) -> AutoencoderParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = AutoencoderParams::init(cfg, &mut rng);
        // larger than the default init so every path matters
        p.scale(1.5);
        p
    }

    #[test]
    fn zero_params_give_context_bias() {
        let cfg = ModelConfig::new(3, vec![0], 4, 5);
        let mut p = AutoencoderParams::zeros(&cfg);
        p.context.bias = Array1::from(vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        let ctx = encode(&p, &window(4, 3, 0), None).unwrap();
        assert_eq!(ctx.values, p.context.bias);
    }

    #[test]
    fn zero_params_decode_to_output_bias() {
        let cfg = ModelConfig::new(3, vec![0, 2], 4, 5);
        let mut p = AutoencoderParams::zeros(&cfg);
        p.output.bias = Array1::from(vec![0.7, -0.3]);
        let ctx = ContextVector {
            values: Array1::from(vec![1.0, 2.0, 3.0, 4.0, 5.0]),
            window_start: 0,
        };
        let out = decode(&p, &ctx, 4).unwrap();
        for row in out.rows() {
            assert_eq!(row, p.output.bias);
        }
    }

    #[test]
    fn zero_rate_dropout_matches_disabled_bitwise() {
        let cfg = ModelConfig::new(3, vec![0], 6, 4);
        let p = random_params(&cfg, 1);
        let w = window(6, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = Dropout { rate: 0.0, rng: &mut rng };
        let a = encode(&p, &w, Some(&mut d)).unwrap();
        let b = encode(&p, &w, None).unwrap();
        let bits = |c: &ContextVector| c.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = encode(&p, &w, None).unwrap();
        assert_eq!(bits(&b), bits(&c));
    }

    #[test]
    fn active_dropout_changes_context() {
        let cfg = ModelConfig::new(3, vec![0], 6, 4);
        let p = random_params(&cfg, 1);
        let w = window(6, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = Dropout { rate: 0.5, rng: &mut rng };
        let a = encode(&p, &w, Some(&mut d)).unwrap();
        let b = encode(&p, &w, None).unwrap();
        assert_ne!(a.values, b.values);
    }

    fn cell(p: &LstmLayerParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (h, c) = crate::neural::lstm_cell_step(
            p,
            Array1::from(x.to_vec()).view(),
            Array1::from(h.to_vec()).view(),
            Array1::from(c.to_vec()).view(),
        )
        .unwrap();
        (h.to_vec(), c.to_vec())
    }

    fn dense(d: &Dense, x: &[f64]) -> Vec<f64> {
        (0..d.bias.len())
            .map(|i| d.bias[i] + (0..x.len()).map(|j| d.weight[[i, j]] * x[j]).sum::<f64>())
            .collect()
    }

    #[test]
    fn encode_matches_composed_cell_steps() {
        let cfg = ModelConfig {
            n_layers: 2,
            ..ModelConfig::new(2, vec![0], 2, 3)
        };
        let p = random_params(&cfg, 4);
        let w = window(2, 2, 5);
        let mut hs: Vec<Vec<f64>> = (0..2).map(|t| w.values.row(t).to_vec()).collect();
        for layer in &p.encoder {
            let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
            let mut next = Vec::new();
            for x in &hs {
                (h, c) = cell(layer, x, &h, &c);
                next.push(h.clone());
            }
            hs = next;
        }
        let expected = dense(&p.context, hs.last().unwrap());
        let got = encode(&p, &w, None).unwrap();
        for (a, b) in got.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_matches_closed_loop_oracle() {
        let cfg = ModelConfig {
            n_layers: 2,
            ..ModelConfig::new(2, vec![1], 3, 3)
        };
        let p = random_params(&cfg, 9);
        let ctx_vals = vec![0.3, -0.8, 0.5];
        let mut h: Vec<Vec<f64>> = p.decoder_init.iter().map(|d| dense(&d.hidden, &ctx_vals)).collect();
        let mut c: Vec<Vec<f64>> = p.decoder_init.iter().map(|d| dense(&d.cell, &ctx_vals)).collect();
        let mut y = vec![0.0];
        let mut expected = Vec::new();
        for _ in 0..3 {
            let mut x = y.clone();
            for (l, layer) in p.decoder.iter().enumerate() {
                let (hn, cn) = cell(layer, &x, &h[l], &c[l]);
                h[l] = hn;
                c[l] = cn;
                x = h[l].clone();
            }
            y = dense(&p.output, &x);
            expected.push(y[0]);
        }
        let got = decode(
            &p,
            &ContextVector {
                values: Array1::from(ctx_vals),
                window_start: 0,
            },
            3,
        )
        .unwrap();
        for t in 0..3 {
            assert!((got[[t, 0]] - expected[t]).abs() < 1e-12);
        }
        let again = decode(&p, &ContextVector { values: Array1::from(vec![0.3, -0.8, 0.5]), window_start: 0 }, 3).unwrap();
        assert_eq!(got, again);
    }

    #[test]
    fn mse_examples() {
        let a = Array2::from_elem((3, 2), 1.5);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let b = &a + 2.0;
        assert_eq!(mse_loss(&b, &a).unwrap(), 4.0);
        assert!(mse_loss(&a, &Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn mse_matches_double_loop() {
        let x = window(7, 3, 1).values;
        let y = window(7, 3, 2).values;
        let mut acc = 0.0;
        for i in 0..7 {
            for j in 0..3 {
                acc += (x[[i, j]] - y[[i, j]]).powi(2);
            }
        }
        assert!((mse_loss(&x, &y).unwrap() - acc / 21.0).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_gives_zero_output_gradient() {
        let cfg = ModelConfig::new(3, vec![0, 1], 4, 5);
        let p = random_params(&cfg, 2);
        let w = window(4, 3, 3);
        let target = reconstruct(&p, &w).unwrap();
        let (loss, g) = backward(&p, &w, &target, None).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.output.weight.iter().all(|&v| v == 0.0));
        assert!(g.output.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let cfg = ModelConfig::new(3, vec![0, 1], 4, 5);
        let p = random_params(&cfg, 2);
        let w = window(4, 3, 3);
        let target = Array2::from_elem((4, 2), 10.0);
        let (_, mut g) = backward(&p, &w, &target, None).unwrap();
        let before = clip_global_norm(&mut g, 1.0);
        assert!(before > 1.0);
        assert!(g.global_norm() <= 1.0 + 1e-9);
    }

    #[test]
    fn shape_contract_holds() {
        for (p_dim, k, t, h, layers) in [(4, 4, 3, 2, 1), (6, 2, 5, 3, 2), (3, 1, 1, 4, 3)] {
            let cfg = ModelConfig {
                n_layers: layers,
                ..ModelConfig::new(p_dim, (0..k).collect(), t, h)
            };
            let params = random_params(&cfg, 0);
            let out = reconstruct(&params, &window(t, p_dim, 1)).unwrap();
            assert_eq!(out.dim(), (t, k));
        }
    }

    #[test]
    fn wrong_window_width_is_usage_error() {
        let cfg = ModelConfig::new(3, vec![0], 4, 5);
        let p = AutoencoderParams::zeros(&cfg);
        assert!(matches!(encode(&p, &window(4, 2, 0), None), Err(Error::Usage(_))));
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let cfg = ModelConfig::new(2, vec![0], 3, 2);
        let mut p = random_params(&cfg, 0);
        p.output.weight[[0, 0]] = f64::NAN;
        let w = window(3, 2, 0);
        let err = backward(&p, &w, &Array2::zeros((3, 1)), None).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }
}
