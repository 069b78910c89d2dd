use super::{AutoencoderParams, ModelConfig};
use crate::error::{Error, Result};

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Fresh state for tensors of the given lengths.
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(params: &AutoencoderParams) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self::new(&sizes)
    }

    /// One bias-corrected Adam update over named flat tensors. Nothing is
    /// written if any updated value would be non-finite.
    pub fn update(
        &mut self,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        params: Vec<(String, &mut [f64])>,
        grads: Vec<&[f64]>,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::usage(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let step = self.step + 1;
        let bc1 = 1.0 - beta1.powi(step as i32);
        let bc2 = 1.0 - beta2.powi(step as i32);

        let mut staged = Vec::with_capacity(params.len());
        for (i, ((name, theta), g)) in params.iter().zip(&grads).enumerate() {
            if theta.len() != g.len() || theta.len() != self.m[i].len() {
                return Err(Error::usage(format!("shape mismatch in `{name}`")));
            }
            let mut m = self.m[i].clone();
            let mut v = self.v[i].clone();
            let mut next = theta.to_vec();
            for j in 0..g.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                next[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                if !next[j].is_finite() {
                    return Err(Error::Numerical {
                        param: name.clone(),
                        message: "non-finite Adam update".into(),
                    });
                }
            }
            staged.push((m, v, next));
        }
        for (i, ((_, theta), (m, v, next))) in params.into_iter().zip(staged).enumerate() {
            theta.copy_from_slice(&next);
            self.m[i] = m;
            self.v[i] = v;
        }
        self.step = step;
        Ok(())
    }
}

/// Applies one Adam step to every auto-encoder tensor.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut AutoencoderParams,
    grads: &AutoencoderParams,
    config: &ModelConfig,
) -> Result<()> {
    let g: Vec<&[f64]> = grads.tensors().into_iter().map(|(_, t)| t).collect();
    state.update(
        config.learning_rate,
        config.adam_beta1,
        config.adam_beta2,
        config.adam_epsilon,
        params.tensors_mut(),
        g,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_step(state: &mut AdamState, theta: &mut f64, g: f64, lr: f64) -> Result<()> {
        let mut buf = [*theta];
        state.update(lr, 0.9, 0.999, 1e-8, vec![("theta".into(), &mut buf[..])], vec![&[g][..]])?;
        *theta = buf[0];
        Ok(())
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let cfg = ModelConfig::new(3, vec![0], 4, 4);
        let mut p = AutoencoderParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamState::for_params(&p);
        adam_step(&mut st, &mut p, &g, &cfg).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        for g in [0.3, -2.0, 1e-3] {
            let mut st = AdamState::new(&[1]);
            let mut theta = 1.0;
            scalar_step(&mut st, &mut theta, g, 0.01).unwrap();
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((theta - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut st = AdamState::new(&[1]);
        let mut theta = 1.0f64;
        let mut trace = vec![theta.abs()];
        for _ in 0..100 {
            let g = 2.0 * theta;
            scalar_step(&mut st, &mut theta, g, 0.1).unwrap();
            trace.push(theta.abs());
        }
        // monotone over the first stretch, before momentum overshoots
        assert!(trace[..10].windows(2).all(|w| w[1] < w[0]));
        assert!(theta.abs() < 0.1, "{theta}");
    }

    #[test]
    fn non_finite_update_rejected_without_writing() {
        let mut st = AdamState::new(&[2]);
        let mut buf = [1.0, 2.0];
        let err = st
            .update(0.1, 0.9, 0.999, 1e-8, vec![("w".into(), &mut buf[..])], vec![&[f64::NAN, 1.0][..]])
            .unwrap_err();
        assert!(matches!(err, Error::Numerical { ref param, .. } if param == "w"));
        assert_eq!(buf, [1.0, 2.0]);
        assert_eq!(st.step, 0);
    }
}
