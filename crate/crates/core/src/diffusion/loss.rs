use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::denoiser::{Denoiser, Linear};
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

/// `x_t = √ᾱ_t · x0 + √(1−ᾱ_t) · noise`.
pub fn forward_diffuse_numeric(x0: &[f64], t: usize, noise: &[f64], sched: &NoiseSchedule) -> Vec<f64> {
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.iter().zip(noise).map(|(x, e)| a * x + b * e).collect()
}

/// Draws the category of `x_t` from `Cat(ᾱ_t · x0 + (1−ᾱ_t)/K)`.
pub fn forward_diffuse_categorical<R: Rng + ?Sized>(x0: &[f64], t: usize, rng: &mut R, sched: &NoiseSchedule) -> usize {
    let ab = sched.alpha_bar(t);
    let k = x0.len() as f64;
    let probs: Vec<f64> = x0.iter().map(|p| ab * p + (1.0 - ab) / k).collect();
    sample_categorical(&probs, rng)
}

/// Inverse-CDF draw from (possibly unnormalized) probabilities.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// `q(x_{t-1} | x_t, x0)` for the uniform-mixing multinomial chain, with
/// `x0` given as a probability vector. At `t = 1` this is `x0_probs`.
pub fn categorical_posterior(x_t: &[f64], x0_probs: &[f64], t: usize, sched: &NoiseSchedule) -> Vec<f64> {
    if t == 1 {
        return x0_probs.to_vec();
    }
    let k = x_t.len() as f64;
    let (a, ab_prev) = (sched.alpha(t), sched.alpha_bar(t - 1));
    let mut out: Vec<f64> = x_t
        .iter()
        .zip(x0_probs)
        .map(|(xt, p)| (a * xt + (1.0 - a) / k) * (ab_prev * p + (1.0 - ab_prev) / k))
        .collect();
    let z: f64 = out.iter().sum();
    assert!(z > 0.0, "posterior normalizer vanished at t = {t}");
    out.iter_mut().for_each(|v| *v /= z);
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lz = logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln() + m;
    logits.iter().map(|l| l - lz).collect()
}

/// Everything random about one loss evaluation, drawn up front so the loss
/// is a deterministic function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub t: Vec<usize>,
    /// `batch × numeric dims`
    pub noise: Array2<f64>,
    /// Category of `x_t` per row and categorical feature.
    pub categories: Vec<Vec<usize>>,
}

impl NoiseDraw {
    /// Rows reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            t: perm.iter().map(|&i| self.t[i]).collect(),
            noise: self.noise.select(ndarray::Axis(0), perm),
            categories: perm.iter().map(|&i| self.categories[i].clone()).collect(),
        }
    }
}

fn class_of(block: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in block.iter().enumerate() {
        if *v > block[best] {
            best = i;
        }
    }
    best
}

/// Timesteps uniform on `1..=T`, Gaussian noise, and forward categorical
/// samples for every row of `x0`.
pub fn draw_noise<R: Rng + ?Sized>(
    x0: &Array2<f64>,
    numeric_dims: usize,
    category_sizes: &[usize],
    sched: &NoiseSchedule,
    rng: &mut R,
) -> NoiseDraw {
    let b = x0.nrows();
    let mut t = Vec::with_capacity(b);
    let mut noise = Array2::zeros((b, numeric_dims));
    let mut categories = Vec::with_capacity(b);
    for i in 0..b {
        let ti = rng.random_range(1..=sched.steps());
        t.push(ti);
        for j in 0..numeric_dims {
            noise[[i, j]] = rng.sample(StandardNormal);
        }
        let row = x0.row(i);
        let mut off = numeric_dims;
        let mut cats = Vec::with_capacity(category_sizes.len());
        for &k in category_sizes {
            let block = row.slice(s![off..off + k]).to_vec();
            cats.push(forward_diffuse_categorical(&block, ti, rng, sched));
            off += k;
        }
        categories.push(cats);
    }
    NoiseDraw { t, noise, categories }
}

/// Noisy network input `x_t` implied by `x0` and a draw.
pub fn noisy_input(x0: &Array2<f64>, draw: &NoiseDraw, numeric_dims: usize, category_sizes: &[usize], sched: &NoiseSchedule) -> Array2<f64> {
    let mut x_t = Array2::zeros(x0.raw_dim());
    for i in 0..x0.nrows() {
        let ab = sched.alpha_bar(draw.t[i]);
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        for j in 0..numeric_dims {
            x_t[[i, j]] = a * x0[[i, j]] + b * draw.noise[[i, j]];
        }
        let mut off = numeric_dims;
        for (f, &k) in category_sizes.iter().enumerate() {
            x_t[[i, off + draw.categories[i][f]]] = 1.0;
            off += k;
        }
    }
    x_t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub numeric: f64,
    pub categorical: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.numeric + self.categorical
    }
}

/// KL between the true and predicted categorical posteriors for one row and
/// feature, and its gradient with respect to the logits.
fn categorical_kl(x_t: &[f64], class: usize, logits: &[f64], t: usize, sched: &NoiseSchedule) -> (f64, Vec<f64>) {
    let k = logits.len();
    if t == 1 {
        let ls = log_softmax(logits);
        let grad = ls.iter().enumerate().map(|(j, l)| l.exp() - f64::from(u8::from(j == class))).collect();
        return (-ls[class], grad);
    }
    let mut onehot = vec![0.0; k];
    onehot[class] = 1.0;
    let q = categorical_posterior(x_t, &onehot, t, sched);
    let s = softmax(logits);
    let kf = k as f64;
    let (a, ab_prev) = (sched.alpha(t), sched.alpha_bar(t - 1));
    let c = (1.0 - ab_prev) / kf;
    let w: Vec<f64> = x_t.iter().map(|x| a * x + (1.0 - a) / kf).collect();
    let u: Vec<f64> = (0..k).map(|j| w[j] * (ab_prev * s[j] + c)).collect();
    let big_u: f64 = u.iter().sum();
    let mut kl = 0.0;
    for j in 0..k {
        if q[j] > 0.0 {
            kl += q[j] * (q[j].ln() - (u[j] / big_u).ln());
        }
    }
    let g: Vec<f64> = (0..k).map(|j| w[j] * ab_prev * (1.0 / big_u - q[j] / u[j])).collect();
    let sg: f64 = (0..k).map(|j| s[j] * g[j]).sum();
    let grad = (0..k).map(|j| s[j] * (g[j] - sg)).collect();
    (kl.max(0.0), grad)
}

/// Loss and exact parameter gradients for a fixed noise draw.
///
/// The numeric term is the mean squared error of the noise estimate over
/// rows and numeric columns; the categorical term is the per-row mean of the
/// posterior KL summed over features and scaled by `categorical_weight`
/// (`1/c` when `None`).
pub fn loss_and_grad_with(
    denoiser: &Denoiser,
    sched: &NoiseSchedule,
    x0: &Array2<f64>,
    draw: &NoiseDraw,
    categorical_weight: Option<f64>,
) -> Result<(LossParts, Vec<Linear>)> {
    let b = x0.nrows();
    if b == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let nd = denoiser.numeric_dims;
    let sizes = &denoiser.category_sizes;
    let x_t = noisy_input(x0, draw, nd, sizes, sched);
    let (out, cache) = denoiser.forward(&x_t, &draw.t);
    let mut d_out = Array2::zeros(out.raw_dim());
    let mut numeric = 0.0;
    if nd > 0 {
        let scale = 1.0 / (b * nd) as f64;
        for i in 0..b {
            for j in 0..nd {
                let r = out[[i, j]] - draw.noise[[i, j]];
                numeric += r * r;
                d_out[[i, j]] = 2.0 * r * scale;
            }
        }
        numeric *= scale;
    }
    let mut categorical = 0.0;
    if !sizes.is_empty() {
        let weight = categorical_weight.unwrap_or(1.0 / sizes.len() as f64) / b as f64;
        for i in 0..b {
            let mut off = nd;
            for &k in sizes.iter() {
                let xt_block = x_t.slice(s![i, off..off + k]).to_vec();
                let x0_block = x0.slice(s![i, off..off + k]).to_vec();
                let logits = out.slice(s![i, off..off + k]).to_vec();
                let (kl, grad) = categorical_kl(&xt_block, class_of(&x0_block), &logits, draw.t[i], sched);
                categorical += weight * kl;
                for (j, g) in grad.into_iter().enumerate() {
                    d_out[[i, off + j]] = weight * g;
                }
                off += k;
            }
        }
    }
    let parts = LossParts { numeric, categorical };
    if !parts.total().is_finite() {
        return Err(Error::NonFinite(format!("loss (timesteps {:?})", draw.t)));
    }
    Ok((parts, denoiser.backward(&cache, d_out)))
}

/// Draws noise for `x0` and evaluates [`loss_and_grad_with`].
pub fn loss_and_grad<R: Rng + ?Sized>(
    denoiser: &Denoiser,
    sched: &NoiseSchedule,
    x0: &Array2<f64>,
    categorical_weight: Option<f64>,
    rng: &mut R,
) -> Result<(LossParts, Vec<Linear>)> {
    let draw = draw_noise(x0, denoiser.numeric_dims, &denoiser.category_sizes, sched, rng);
    loss_and_grad_with(denoiser, sched, x0, &draw, categorical_weight)
}
