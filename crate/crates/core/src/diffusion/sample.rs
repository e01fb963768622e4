use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::denoiser::Denoiser;
use super::loss::{categorical_posterior, sample_categorical, softmax};
use super::schedule::NoiseSchedule;
use super::train::DiffusionModel;
use crate::error::Result;
use crate::par;
use crate::preprocess::{EncodedMatrix, DEFAULT_CLAMP};

/// Rows drawn from one seed substream.
const SHARD_ROWS: usize = 1024;

/// Anything that maps a batch of noisy rows at one timestep to numeric
/// noise estimates followed by per-feature logits.
pub trait NoisePredictor: Sync {
    fn numeric_dims(&self) -> usize;
    fn category_sizes(&self) -> &[usize];
    fn predict(&self, x_t: &Array2<f64>, t: usize) -> Array2<f64>;
}

impl NoisePredictor for Denoiser {
    fn numeric_dims(&self) -> usize {
        self.numeric_dims
    }

    fn category_sizes(&self) -> &[usize] {
        &self.category_sizes
    }

    fn predict(&self, x_t: &Array2<f64>, t: usize) -> Array2<f64> {
        Denoiser::predict(self, x_t, &vec![t; x_t.nrows()])
    }
}

/// Ancestral sampling from `T` down to 1. Numeric columns start from
/// `N(0, 1)` and take the Gaussian posterior step `q(x_{t-1} | x_t, x̂0)`
/// with `x̂0 = (x_t − √(1−ᾱ_t) ε̂) / √ᾱ_t`, optionally clipped to
/// `±clip`; categorical blocks start uniform and are redrawn from the
/// multinomial posterior under the softmax of the logits. Categorical blocks
/// of the result are one-hot.
pub fn ancestral_sample<P: NoisePredictor>(
    predictor: &P,
    sched: &NoiseSchedule,
    n: usize,
    seed: u64,
    clip: Option<f64>,
) -> Array2<f64> {
    let nd = predictor.numeric_dims();
    let sizes = predictor.category_sizes();
    let d = nd + sizes.iter().sum::<usize>();
    let shards = n.div_ceil(SHARD_ROWS);
    let parts: Vec<Array2<f64>> = par::map_indexed(shards, |sh| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sh as u64);
        let rows = SHARD_ROWS.min(n - sh * SHARD_ROWS);
        sample_shard(predictor, sched, rows, d, clip, &mut rng)
    });
    let mut out = Array2::zeros((n, d));
    for (sh, p) in parts.into_iter().enumerate() {
        let start = sh * SHARD_ROWS;
        out.slice_mut(s![start..start + p.nrows(), ..]).assign(&p);
    }
    out
}

fn sample_shard<P: NoisePredictor, R: Rng>(
    predictor: &P,
    sched: &NoiseSchedule,
    rows: usize,
    d: usize,
    clip: Option<f64>,
    rng: &mut R,
) -> Array2<f64> {
    let nd = predictor.numeric_dims();
    let sizes = predictor.category_sizes();
    let mut x = Array2::zeros((rows, d));
    for i in 0..rows {
        for j in 0..nd {
            x[[i, j]] = rng.sample(StandardNormal);
        }
        let mut off = nd;
        for &k in sizes {
            x[[i, off + rng.random_range(0..k)]] = 1.0;
            off += k;
        }
    }
    for t in (1..=sched.steps()).rev() {
        let out = predictor.predict(&x, t);
        let (alpha, beta, ab, ab_prev) = (sched.alpha(t), sched.beta(t), sched.alpha_bar(t), sched.alpha_bar(t - 1));
        let (sqrt_ab, sqrt_1m_ab) = (ab.sqrt(), (1.0 - ab).sqrt());
        let coef_x0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let coef_xt = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let sigma = if t > 1 { sched.posterior_variance(t).sqrt() } else { 0.0 };
        let mut next = Array2::zeros((rows, d));
        for i in 0..rows {
            for j in 0..nd {
                let mut x0 = (x[[i, j]] - sqrt_1m_ab * out[[i, j]]) / sqrt_ab;
                if let Some(c) = clip {
                    x0 = x0.clamp(-c, c);
                }
                let mean = coef_x0 * x0 + coef_xt * x[[i, j]];
                let z: f64 = if t > 1 { rng.sample(StandardNormal) } else { 0.0 };
                next[[i, j]] = mean + sigma * z;
            }
            let mut off = nd;
            for &k in sizes {
                let xt = x.slice(s![i, off..off + k]).to_vec();
                let probs = softmax(&out.slice(s![i, off..off + k]).to_vec());
                let post = categorical_posterior(&xt, &probs, t, sched);
                next[[i, off + sample_categorical(&post, rng)]] = 1.0;
                off += k;
            }
        }
        x = next;
    }
    x
}

impl DiffusionModel {
    /// `n` encoded rows; deterministic for a seed regardless of thread
    /// count. Denoised numeric estimates are clipped to the quantile
    /// transform's range.
    pub fn sample(&self, n: usize, seed: u64) -> Result<EncodedMatrix> {
        self.denoiser.check_layout(&self.layout)?;
        let data = ancestral_sample(&self.denoiser, &self.schedule, n, seed, Some(DEFAULT_CLAMP));
        EncodedMatrix::new(data, self.layout.clone())
    }
}
