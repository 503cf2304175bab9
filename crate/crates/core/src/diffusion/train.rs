use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gaussian_vec;
use super::mlp::{mlp_gradients, mlp_loss, MlpDenoiser, TrainSample};
use super::schedule::{cosine_schedule, NoiseSchedule};
use crate::error::{Error, Result};

/// A clean training vector with its condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExample {
    pub x0: Vec<f64>,
    pub cond: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub ema_decay: f64,
    pub ema_every: usize,
    pub diffusion_steps: usize,
    pub schedule_s: f64,
    pub widths: Vec<usize>,
    pub time_dim: usize,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1_000_000,
            batch_size: 32,
            eval_batch_size: 64,
            lr: 1e-4,
            warmup_steps: 10_000,
            beta1: 0.9,
            beta2: 0.99,
            adam_eps: 1e-8,
            ema_decay: 0.995,
            ema_every: 10,
            diffusion_steps: 1024,
            schedule_s: 0.008,
            widths: vec![128, 128],
            time_dim: 16,
            log_every: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(Error::invalid("train.batch_size", "must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::domain("train.lr", self.lr, 0.0, f64::INFINITY));
        }
        for (name, v) in [
            ("train.beta1", self.beta1),
            ("train.beta2", self.beta2),
            ("train.ema_decay", self.ema_decay),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::domain(name, v, 0.0, 1.0));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid("train.adam_eps", "must be positive"));
        }
        if self.ema_every == 0 || self.log_every == 0 {
            return Err(Error::invalid("train", "ema_every and log_every must be positive"));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 {
            self.lr
        } else {
            self.lr * (step as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Number of optimizer updates applied so far.
    pub step: usize,
    pub batch_loss: f64,
    /// Loss of the live parameters on the fixed evaluation batch.
    pub eval_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Exponential moving average of the weights.
    pub model: MlpDenoiser,
    /// Weights after the final update.
    pub last: MlpDenoiser,
    pub schedule: NoiseSchedule,
    pub log: Vec<LogEntry>,
}

fn draw_row<R: Rng + ?Sized>(ex: &TrainExample, steps: usize, rng: &mut R) -> TrainSample {
    TrainSample {
        x0: ex.x0.clone(),
        cond: ex.cond.clone(),
        t: rng.random_range(1..=steps),
        eps: gaussian_vec(rng, ex.x0.len()),
    }
}

/// Adam on the ε-prediction loss with linear warm-up and periodic weight EMA.
pub fn train_denoiser(dataset: &[TrainExample], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let first = dataset.first().ok_or(Error::Empty("training dataset"))?;
    let (x_dim, c_dim) = (first.x0.len(), first.cond.len());
    if let Some(i) = dataset
        .iter()
        .position(|e| e.x0.len() != x_dim || e.cond.len() != c_dim)
    {
        return Err(Error::invalid(
            "training dataset",
            format!("row {i} has inconsistent dimensions"),
        ));
    }
    let schedule = cosine_schedule(config.diffusion_steps, config.schedule_s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpDenoiser::new(x_dim, c_dim, config.time_dim, &config.widths, &mut rng)?;

    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let eval_batch: Vec<TrainSample> = (0..config.eval_batch_size)
        .map(|i| draw_row(&dataset[i % dataset.len()], config.diffusion_steps, &mut eval_rng))
        .collect();

    let mut params = model.params();
    let mut ema = params.clone();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut log = Vec::new();

    for step in 1..=config.steps {
        let batch: Vec<TrainSample> = (0..config.batch_size)
            .map(|_| {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                cursor += 1;
                draw_row(&dataset[order[cursor - 1]], config.diffusion_steps, &mut rng)
            })
            .collect();
        let (loss, grads) = mlp_gradients(&model, &batch, &schedule)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at step {step}")));
        }
        let lr = config.lr_at(step);
        let bc1 = 1.0 - config.beta1.powi(step as i32);
        let bc2 = 1.0 - config.beta2.powi(step as i32);
        for i in 0..params.len() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grads[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
            let mh = m[i] / bc1;
            let vh = v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + config.adam_eps);
        }
        model.set_params(&params)?;
        if step % config.ema_every == 0 {
            for (e, p) in ema.iter_mut().zip(&params) {
                *e += (1.0 - config.ema_decay) * (p - *e);
            }
        }
        if step % config.log_every == 0 || step == config.steps {
            let eval_loss = mlp_loss(&model, &eval_batch, &schedule)?;
            log::info!("step {step}: batch loss {loss:.6}, eval loss {eval_loss:.6}");
            log.push(LogEntry {
                step,
                batch_loss: loss,
                eval_loss,
            });
        }
    }

    let last = model.clone();
    model.set_params(&ema)?;
    Ok(TrainReport {
        model,
        last,
        schedule,
        log,
    })
}
