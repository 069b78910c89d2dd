use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::lstm::GATES;
use super::ModelConfig;

/// One LSTM layer. Gate rows are stacked in the order input, forget,
/// cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// `4H x D_in`
    pub w: Array2<f64>,
    /// `4H x H`
    pub u: Array2<f64>,
    /// `4H`
    pub b: Array1<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Array2::zeros((GATES * hidden, input)),
            u: Array2::zeros((GATES * hidden, hidden)),
            b: Array1::zeros(GATES * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }
}

/// Affine map `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }
}

/// Maps the context vector to one decoder layer's initial hidden and cell
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderInit {
    pub hidden: Dense,
    pub cell: Dense,
}

/// Every learnable tensor of the auto-encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub encoder: Vec<LstmLayerParams>,
    pub context: Dense,
    pub decoder_init: Vec<DecoderInit>,
    pub decoder: Vec<LstmLayerParams>,
    pub output: Dense,
}

impl AutoencoderParams {
    /// All-zero parameters shaped for `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let (p, k, h, n) = (
            config.input_dim,
            config.output_dim,
            config.hidden,
            config.n_layers,
        );
        let layer = |input: usize| LstmLayerParams::zeros(input, h);
        Self {
            encoder: (0..n).map(|l| layer(if l == 0 { p } else { h })).collect(),
            context: Dense::zeros(h, h),
            decoder_init: (0..n)
                .map(|_| DecoderInit {
                    hidden: Dense::zeros(h, h),
                    cell: Dense::zeros(h, h),
                })
                .collect(),
            decoder: (0..n).map(|l| layer(if l == 0 { k } else { h })).collect(),
            output: Dense::zeros(h, k),
        }
    }

    /// Zero tensors with the same shapes as `self`.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Uniform(-1/sqrt(H), 1/sqrt(H)) everywhere, then forget-gate biases
    /// set to 1.
    pub fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut params = Self::zeros(config);
        let s = 1.0 / (config.hidden as f64).sqrt();
        for (_, values) in params.tensors_mut() {
            for v in values.iter_mut() {
                *v = rng.random_range(-s..s);
            }
        }
        let h = config.hidden;
        for layer in params.encoder.iter_mut().chain(params.decoder.iter_mut()) {
            layer.b.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
        }
        params
    }

    pub fn n_layers(&self) -> usize {
        self.encoder.len()
    }

    pub fn hidden(&self) -> usize {
        self.context.bias.len()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.bias.len()
    }

    /// Names and shapes of every tensor, in declared order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.entries()
            .into_iter()
            .map(|(name, shape, _)| (name, shape))
            .collect()
    }

    /// Every tensor as a flat row-major slice, in declared order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        self.entries()
            .into_iter()
            .map(|(name, _, values)| (name, values))
            .collect()
    }

    fn entries(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn layer<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, prefix: String, l: &'a LstmLayerParams) {
            out.push((format!("{prefix}.w"), l.w.shape().to_vec(), l.w.as_slice().expect("contiguous")));
            out.push((format!("{prefix}.u"), l.u.shape().to_vec(), l.u.as_slice().expect("contiguous")));
            out.push((format!("{prefix}.b"), l.b.shape().to_vec(), l.b.as_slice().expect("contiguous")));
        }
        fn dense<'a>(out: &mut Vec<(String, Vec<usize>, &'a [f64])>, prefix: String, d: &'a Dense) {
            out.push((
                format!("{prefix}.weight"),
                d.weight.shape().to_vec(),
                d.weight.as_slice().expect("contiguous"),
            ));
            out.push((format!("{prefix}.bias"), d.bias.shape().to_vec(), d.bias.as_slice().expect("contiguous")));
        }
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            layer(&mut out, format!("encoder.{i}"), l);
        }
        dense(&mut out, "context".into(), &self.context);
        for (i, d) in self.decoder_init.iter().enumerate() {
            dense(&mut out, format!("decoder_init.{i}.hidden"), &d.hidden);
            dense(&mut out, format!("decoder_init.{i}.cell"), &d.cell);
        }
        for (i, l) in self.decoder.iter().enumerate() {
            layer(&mut out, format!("decoder.{i}"), l);
        }
        dense(&mut out, "output".into(), &self.output);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter_mut().enumerate() {
            layer_mut(&mut out, format!("encoder.{i}"), l);
        }
        dense_mut(&mut out, "context".into(), &mut self.context);
        for (i, d) in self.decoder_init.iter_mut().enumerate() {
            dense_mut(&mut out, format!("decoder_init.{i}.hidden"), &mut d.hidden);
            dense_mut(&mut out, format!("decoder_init.{i}.cell"), &mut d.cell);
        }
        for (i, l) in self.decoder.iter_mut().enumerate() {
            layer_mut(&mut out, format!("decoder.{i}"), l);
        }
        dense_mut(&mut out, "output".into(), &mut self.output);
        out
    }

    /// Total number of scalar parameters.
    pub fn n_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Euclidean norm over every parameter.
    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Name of the first tensor holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }
}

fn layer_mut<'a>(out: &mut Vec<(String, &'a mut [f64])>, prefix: String, l: &'a mut LstmLayerParams) {
    out.push((format!("{prefix}.w"), l.w.as_slice_mut().expect("contiguous")));
    out.push((format!("{prefix}.u"), l.u.as_slice_mut().expect("contiguous")));
    out.push((format!("{prefix}.b"), l.b.as_slice_mut().expect("contiguous")));
}

fn dense_mut<'a>(out: &mut Vec<(String, &'a mut [f64])>, prefix: String, d: &'a mut Dense) {
    out.push((format!("{prefix}.weight"), d.weight.as_slice_mut().expect("contiguous")));
    out.push((format!("{prefix}.bias"), d.bias.as_slice_mut().expect("contiguous")));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn shapes_chain_from_inputs_to_outputs() {
        let cfg = ModelConfig::new(5, vec![1, 3], 4, 6);
        let p = AutoencoderParams::zeros(&cfg);
        assert_eq!(p.encoder[0].w.dim(), (24, 5));
        assert_eq!(p.encoder[1].w.dim(), (24, 6));
        assert_eq!(p.decoder[0].w.dim(), (24, 2));
        assert_eq!(p.output.weight.dim(), (2, 6));
        assert_eq!(p.layout().len(), p.tensors().len());
        let names: Vec<_> = p.tensors().iter().map(|(n, _)| n.clone()).collect();
        let mut names_mut: Vec<_> = Vec::new();
        let mut q = p.clone();
        for (n, _) in q.tensors_mut() {
            names_mut.push(n);
        }
        assert_eq!(names, names_mut);
    }

    #[test]
    fn init_is_bounded_with_unit_forget_bias() {
        let cfg = ModelConfig::new(3, vec![0], 4, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = AutoencoderParams::init(&cfg, &mut rng);
        let s = 0.25;
        assert!(p.encoder[0].w.iter().all(|v| v.abs() <= s));
        assert!(p.encoder[0].b.slice(ndarray::s![16..32]).iter().all(|&v| v == 1.0));
        assert!(p.decoder[2].b.slice(ndarray::s![16..32]).iter().all(|&v| v == 1.0));
        assert!(p.encoder[0].b.slice(ndarray::s![0..16]).iter().all(|v| v.abs() <= s));
    }
}
