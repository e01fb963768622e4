//! Denoising diffusion over encoded rows: Gaussian diffusion on the numeric
//! block, multinomial (uniform-mixing) diffusion on each one-hot block, and
//! a single MLP that predicts the numeric noise and the categorical logits.

mod checkpoint;
mod denoiser;
mod loss;
mod sample;
mod schedule;
mod train;

pub use checkpoint::{TrainingLog, CHECKPOINT_MAGIC};
pub use denoiser::{timestep_embedding, Denoiser, ForwardCache, Linear};
pub use loss::{
    categorical_posterior, draw_noise, forward_diffuse_categorical, forward_diffuse_numeric, loss_and_grad,
    loss_and_grad_with, noisy_input, sample_categorical, softmax, LossParts, NoiseDraw,
};
pub use sample::{ancestral_sample, NoisePredictor};
pub use schedule::{make_cosine_schedule, NoiseSchedule};
pub use train::{train, train_with_progress, DiffusionModel, TrainConfig};
