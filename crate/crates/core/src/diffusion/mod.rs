//! Denoising diffusion machinery: cosine noise schedule, forward noising,
//! respaced ancestral sampling, an analytic Gaussian denoiser and a small
//! fully-connected ε-predictor trained with hand-derived gradients.

mod mlp;
mod sampler;
mod schedule;
mod train;

pub use mlp::{mlp_gradients, mlp_loss, Dense, MlpDenoiser, TrainSample};
pub use sampler::{oracle_gaussian_eps, p_sample_loop, respaced_timesteps, reverse_step, Denoiser, GaussianOracle};
pub use schedule::{cosine_schedule, q_sample, NoiseSchedule};
pub use train::{train_denoiser, LogEntry, TrainConfig, TrainExample, TrainReport};

use rand::Rng;
use rand_distr::StandardNormal;

/// Fills a vector with standard-normal draws.
pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}
