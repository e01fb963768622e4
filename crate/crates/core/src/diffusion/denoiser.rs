use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::Layout;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in × out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn zeros(input: usize, output: usize) -> Self {
        Self { weight: Array2::zeros((input, output)), bias: Array1::zeros(output) }
    }

    pub fn input(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output(&self) -> usize {
        self.weight.ncols()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Sinusoidal embedding of timestep `t`: sines then cosines over
/// geometrically spaced frequencies.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        out[i] = arg.sin();
        out[half + i] = arg.cos();
    }
    out
}

/// MLP mapping `[x_t, embedding(t)]` to numeric noise estimates followed by
/// one logit vector per categorical feature, SiLU between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub layers: Vec<Linear>,
    pub embedding_dim: usize,
    pub numeric_dims: usize,
    pub category_sizes: Vec<usize>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
}

impl Denoiser {
    /// Zero-initialized network for the given encoded layout.
    pub fn zeros(layout: &Layout, hidden: &[usize], embedding_dim: usize) -> Result<Self> {
        if !embedding_dim.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("embedding dimension {embedding_dim} must be even")));
        }
        let numeric_dims = layout.numeric_dims();
        let category_sizes = layout.categorical_sizes();
        let output = numeric_dims + category_sizes.iter().sum::<usize>();
        let mut widths = vec![layout.dim() + embedding_dim];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let layers = widths.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        Ok(Self { layers, embedding_dim, numeric_dims, category_sizes })
    }

    /// Weights and biases drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn init(layout: &Layout, hidden: &[usize], embedding_dim: usize, seed: u64) -> Result<Self> {
        let mut d = Self::zeros(layout, hidden, embedding_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut d.layers {
            let bound = 1.0 / (l.input() as f64).sqrt();
            l.weight.mapv_inplace(|_| rng.random_range(-bound..bound));
            l.bias.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(d)
    }

    pub fn data_dim(&self) -> usize {
        self.layers[0].input() - self.embedding_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").output()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// `[x_t | embedding(t)]` for each row.
    pub fn build_input(&self, x_t: &Array2<f64>, t: &[usize]) -> Array2<f64> {
        let emb_rows: Vec<f64> = t.iter().flat_map(|&s| timestep_embedding(s, self.embedding_dim)).collect();
        let emb = Array2::from_shape_vec((t.len(), self.embedding_dim), emb_rows).expect("shape");
        concatenate(Axis(1), &[x_t.view(), emb.view()]).expect("row counts agree")
    }

    /// Raw network output, `batch × (numeric + Σ K)`.
    pub fn forward(&self, x_t: &Array2<f64>, t: &[usize]) -> (Array2<f64>, ForwardCache) {
        let mut h = self.build_input(x_t, t);
        let mut cache = ForwardCache { inputs: Vec::new(), pre: Vec::new() };
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.weight) + &l.bias;
            cache.inputs.push(h);
            if i == last {
                return (z, cache);
            }
            h = z.mapv(silu);
            cache.pre.push(z);
        }
        unreachable!("loop returns at the last layer")
    }

    pub fn predict(&self, x_t: &Array2<f64>, t: &[usize]) -> Array2<f64> {
        self.forward(x_t, t).0
    }

    /// Single-row forward pass split into the noise estimate and the
    /// per-feature logits.
    pub fn forward_row(&self, x_t: &[f64], t: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let x = Array2::from_shape_vec((1, x_t.len()), x_t.to_vec()).expect("row");
        let out = self.predict(&x, &[t]);
        let row = out.row(0);
        let eps = row.iter().take(self.numeric_dims).copied().collect();
        let mut logits = Vec::with_capacity(self.category_sizes.len());
        let mut off = self.numeric_dims;
        for &k in &self.category_sizes {
            logits.push(row.iter().skip(off).take(k).copied().collect());
            off += k;
        }
        (eps, logits)
    }

    /// Gradients of every parameter given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>) -> Vec<Linear> {
        self.backward_inner(cache, d_out, false).0
    }

    /// Parameter gradients plus the gradient with respect to the network
    /// input (`x_t` columns followed by the embedding columns).
    pub fn backward_with_input(&self, cache: &ForwardCache, d_out: Array2<f64>) -> (Vec<Linear>, Array2<f64>) {
        let (g, dx) = self.backward_inner(cache, d_out, true);
        (g, dx.expect("requested"))
    }

    fn backward_inner(&self, cache: &ForwardCache, d_out: Array2<f64>, want_input: bool) -> (Vec<Linear>, Option<Array2<f64>>) {
        let mut grads: Vec<Linear> = Vec::with_capacity(self.layers.len());
        let mut dz = d_out;
        let mut d_input = None;
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let weight = cache.inputs[i].t().dot(&dz);
            let bias = dz.sum_axis(Axis(0));
            if i > 0 {
                let dh = dz.dot(&l.weight.t());
                dz = dh * cache.pre[i - 1].mapv(silu_grad);
            } else if want_input {
                d_input = Some(dz.dot(&l.weight.t()));
            }
            grads.push(Linear { weight, bias });
        }
        grads.reverse();
        (grads, d_input)
    }

    pub fn check_layout(&self, layout: &Layout) -> Result<()> {
        if self.data_dim() != layout.dim()
            || self.numeric_dims != layout.numeric_dims()
            || self.category_sizes != layout.categorical_sizes()
        {
            return Err(Error::Schema("denoiser widths do not match the encoded layout".into()));
        }
        Ok(())
    }
}
