use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, Linear};
use super::loss::{loss_and_grad, LossParts};
use super::schedule::{make_cosine_schedule, NoiseSchedule};
use crate::error::{Error, Result};
use crate::preprocess::{EncodedMatrix, Layout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub timesteps: usize,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    /// Multiplier on the summed categorical KL; `None` averages over features.
    pub categorical_weight: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            learning_rate: 2e-4,
            batch_size: 256,
            seed: 0,
            timesteps: 100,
            hidden: vec![256, 256],
            embedding_dim: 32,
            categorical_weight: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate at `step` (0-based) under cosine decay to zero.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let progress = step as f64 / self.steps.max(1) as f64;
        self.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionModel {
    pub schedule: NoiseSchedule,
    pub denoiser: Denoiser,
    pub layout: Layout,
    pub steps_run: usize,
    pub final_loss: Option<f64>,
    pub loss_curve: Vec<f64>,
}

impl DiffusionModel {
    /// Freshly initialized model; what `train` returns for zero steps.
    pub fn init(layout: &Layout, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            schedule: make_cosine_schedule(cfg.timesteps)?,
            denoiser: Denoiser::init(layout, &cfg.hidden, cfg.embedding_dim, cfg.seed)?,
            layout: layout.clone(),
            steps_run: 0,
            final_loss: None,
            loss_curve: Vec::new(),
        })
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: Vec<Linear>,
    v: Vec<Linear>,
    step: i32,
}

impl Adam {
    fn new(d: &Denoiser) -> Self {
        let zeros = |l: &Linear| Linear { weight: Array2::zeros(l.weight.raw_dim()), bias: ndarray::Array1::zeros(l.bias.len()) };
        Self { m: d.layers.iter().map(zeros).collect(), v: d.layers.iter().map(zeros).collect(), step: 0 }
    }

    fn update(&mut self, d: &mut Denoiser, grads: &[Linear], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (i, g) in grads.iter().enumerate() {
            let layer = &mut d.layers[i];
            ndarray::Zip::from(&mut layer.weight)
                .and(&mut self.m[i].weight)
                .and(&mut self.v[i].weight)
                .and(&g.weight)
                .for_each(|p, m, v, &g| step_one(p, m, v, g, lr, c1, c2));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut self.m[i].bias)
                .and(&mut self.v[i].bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| step_one(p, m, v, g, lr, c1, c2));
        }
    }
}

#[inline]
fn step_one(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, c1: f64, c2: f64) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
}

/// Trains a denoiser on `encoded` with Adam and a cosine-decayed learning
/// rate. Mini-batches walk through seeded shuffles of the rows.
pub fn train(encoded: &EncodedMatrix, cfg: &TrainConfig) -> Result<DiffusionModel> {
    train_with_progress(encoded, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(step, loss)` after every step.
pub fn train_with_progress<F: FnMut(usize, LossParts)>(
    encoded: &EncodedMatrix,
    cfg: &TrainConfig,
    mut progress: F,
) -> Result<DiffusionModel> {
    let mut model = DiffusionModel::init(&encoded.layout, cfg)?;
    if cfg.steps == 0 {
        return Ok(model);
    }
    let n = encoded.nrows();
    if n < cfg.batch_size {
        return Err(Error::InvalidArgument(format!("{n} training rows is fewer than the batch size {}", cfg.batch_size)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(&model.denoiser);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 0..cfg.steps {
        batch.clear();
        while batch.len() < cfg.batch_size {
            if cursor == n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let take = (cfg.batch_size - batch.len()).min(n - cursor);
            batch.extend_from_slice(&order[cursor..cursor + take]);
            cursor += take;
        }
        let x0 = encoded.data.select(ndarray::Axis(0), &batch);
        let (parts, grads) = loss_and_grad(&model.denoiser, &model.schedule, &x0, cfg.categorical_weight, &mut rng)
            .map_err(|e| Error::Diverged { step, detail: e.to_string() })?;
        if grads.iter().any(|g| !g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite())) {
            return Err(Error::Diverged { step, detail: "non-finite gradient".into() });
        }
        adam.update(&mut model.denoiser, &grads, cfg.learning_rate_at(step));
        model.loss_curve.push(parts.total());
        progress(step, parts);
    }
    model.steps_run = cfg.steps;
    model.final_loss = model.loss_curve.last().copied();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EncodedMatrix {
        let layout = Layout::from_parts(&["a"], &[("c", 2)]);
        let data = Array2::from_shape_fn((32, 3), |(i, j)| match j {
            0 => (i as f64 / 16.0) - 1.0,
            1 => f64::from(u8::from(i % 2 == 0)),
            _ => f64::from(u8::from(i % 2 == 1)),
        });
        EncodedMatrix::new(data, layout).unwrap()
    }

    fn small_cfg(steps: usize) -> TrainConfig {
        TrainConfig { steps, batch_size: 8, hidden: vec![16], embedding_dim: 8, learning_rate: 1e-2, ..TrainConfig::default() }
    }

    #[test]
    fn zero_steps_returns_initial_model() {
        let m = train(&tiny(), &small_cfg(0)).unwrap();
        let init = DiffusionModel::init(&tiny().layout, &small_cfg(0)).unwrap();
        assert_eq!(m, init);
        assert_eq!(m.steps_run, 0);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = train(&tiny(), &small_cfg(20)).unwrap();
        let b = train(&tiny(), &small_cfg(20)).unwrap();
        assert_eq!(a.denoiser, b.denoiser);
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.loss_curve.len(), 20);
    }

    #[test]
    fn cosine_learning_rate() {
        let cfg = TrainConfig { steps: 100, ..TrainConfig::default() };
        assert_eq!(cfg.learning_rate_at(0), 2e-4);
        assert!((cfg.learning_rate_at(50) - 1e-4).abs() < 1e-18);
        assert!(cfg.learning_rate_at(99) < 1e-7);
    }

    #[test]
    fn batch_larger_than_data_is_rejected() {
        let cfg = TrainConfig { batch_size: 64, ..small_cfg(5) };
        assert!(train(&tiny(), &cfg).is_err());
    }
}
