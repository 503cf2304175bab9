use rand::Rng;

use super::gaussian_vec;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};

/// An ε-predictor over flat vectors of fixed dimension.
pub trait Denoiser {
    fn dim(&self) -> usize;
    fn cond_dim(&self) -> usize;
    fn predict_eps(&self, x: &[f64], t: usize, cond: &[f64]) -> Result<Vec<f64>>;
}

/// Timesteps `τ_k = ⌊k·T/S⌋` for `k = 0..=S`, ascending, `τ_0 = 0`, `τ_S = T`.
pub fn respaced_timesteps(total: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > total {
        return Err(Error::invalid("sampling steps", format!("{steps} not in 1..={total}")));
    }
    Ok((0..=steps).map(|k| k * total / steps).collect())
}

/// One ancestral step from `t` to `t_prev < t` on the respaced chain.
/// `noise` is ignored when `t_prev == 0`.
pub fn reverse_step(
    x: &[f64],
    t: usize,
    t_prev: usize,
    eps_hat: &[f64],
    schedule: &NoiseSchedule,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if t_prev >= t || t > schedule.steps() {
        return Err(Error::Timestep {
            t,
            max: schedule.steps(),
        });
    }
    if eps_hat.len() != x.len() {
        return Err(Error::Shape {
            what: "eps prediction",
            expected: x.len(),
            got: eps_hat.len(),
        });
    }
    let ab = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t_prev);
    let alpha = ab / ab_prev;
    let beta = 1.0 - alpha;
    let coef = beta / (1.0 - ab).sqrt();
    let inv_sqrt_alpha = 1.0 / alpha.sqrt();
    let mut out: Vec<f64> = x
        .iter()
        .zip(eps_hat)
        .map(|(xi, ei)| (xi - coef * ei) * inv_sqrt_alpha)
        .collect();
    if t_prev > 0 {
        if noise.len() != x.len() {
            return Err(Error::Shape {
                what: "sampler noise",
                expected: x.len(),
                got: noise.len(),
            });
        }
        let sigma = (beta * (1.0 - ab_prev) / (1.0 - ab)).sqrt();
        for (o, z) in out.iter_mut().zip(noise) {
            *o += sigma * z;
        }
    }
    Ok(out)
}

/// Ancestral sampling from `x_T ~ N(0, I)` over `steps` uniformly respaced timesteps.
pub fn p_sample_loop<D, R>(
    denoiser: &D,
    cond: &[f64],
    schedule: &NoiseSchedule,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    if cond.len() != denoiser.cond_dim() {
        return Err(Error::Shape {
            what: "condition vector",
            expected: denoiser.cond_dim(),
            got: cond.len(),
        });
    }
    let taus = respaced_timesteps(schedule.steps(), steps)?;
    let dim = denoiser.dim();
    let mut x = gaussian_vec(rng, dim);
    for k in (1..taus.len()).rev() {
        let (t, t_prev) = (taus[k], taus[k - 1]);
        let eps = denoiser.predict_eps(&x, t, cond)?;
        let noise = if t_prev > 0 { gaussian_vec(rng, dim) } else { Vec::new() };
        x = reverse_step(&x, t, t_prev, &eps, schedule, &noise)?;
    }
    Ok(x)
}

/// Exact ε-prediction when `x0 ~ N(mean, std²)` independently per coordinate.
pub fn oracle_gaussian_eps(x: &[f64], t: usize, mean: f64, std: f64, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    if t > schedule.steps() {
        return Err(Error::Timestep {
            t,
            max: schedule.steps(),
        });
    }
    if !(std >= 0.0) || !mean.is_finite() {
        return Err(Error::invalid("oracle target", "need finite mean and std >= 0"));
    }
    let ab = schedule.alpha_bar(t);
    Ok(x.iter().map(|&xi| gaussian_eps(xi, ab, mean, std)).collect())
}

// (x − √ᾱ·E[x0|x]) / √(1−ᾱ), rearranged to stay finite as ᾱ → 1.
fn gaussian_eps(x: f64, ab: f64, mean: f64, std: f64) -> f64 {
    let v = 1.0 - ab;
    let denom = ab * std * std + v;
    if denom == 0.0 {
        return 0.0;
    }
    (x - ab.sqrt() * mean) * v.sqrt() / denom
}

/// Analytic denoiser for a diagonal Gaussian data distribution.
#[derive(Debug, Clone)]
pub struct GaussianOracle {
    schedule: NoiseSchedule,
    mean: Vec<f64>,
    std: Vec<f64>,
    cond_dim: usize,
}

impl GaussianOracle {
    pub fn new(schedule: NoiseSchedule, mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Shape {
                what: "oracle std",
                expected: mean.len(),
                got: std.len(),
            });
        }
        if mean.iter().any(|m| !m.is_finite()) || std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::invalid("oracle target", "need finite mean and std >= 0"));
        }
        Ok(Self {
            schedule,
            mean,
            std,
            cond_dim: 0,
        })
    }

    /// Accepts (and ignores) a condition of the given width.
    pub fn with_cond_dim(mut self, cond_dim: usize) -> Self {
        self.cond_dim = cond_dim;
        self
    }

    /// Per-coordinate sample mean and (population) standard deviation of `samples`.
    pub fn fit(schedule: NoiseSchedule, samples: &[Vec<f64>]) -> Result<Self> {
        let first = samples.first().ok_or(Error::Empty("oracle samples"))?;
        let dim = first.len();
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::invalid("oracle samples", "inconsistent dimensions"));
        }
        let n = samples.len() as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|d| samples.iter().map(|s| s[d]).sum::<f64>() / n)
            .collect();
        let std = (0..dim)
            .map(|d| (samples.iter().map(|s| (s[d] - mean[d]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Self::new(schedule, mean, std)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }
}

impl Denoiser for GaussianOracle {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn predict_eps(&self, x: &[f64], t: usize, _cond: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape {
                what: "oracle input",
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        if t > self.schedule.steps() {
            return Err(Error::Timestep {
                t,
                max: self.schedule.steps(),
            });
        }
        let ab = self.schedule.alpha_bar(t);
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&xi, (&m, &s))| gaussian_eps(xi, ab, m, s))
            .collect())
    }
}
