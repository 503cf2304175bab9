use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_BETA: f64 = 0.999;

/// Cumulative signal retention `ᾱ_0 = 1 > ᾱ_1 > … > ᾱ_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 || alpha_bar[0] != 1.0 {
            return Err(Error::invalid("schedule", "needs alpha_bar[0] = 1 and T >= 1"));
        }
        if alpha_bar.windows(2).any(|w| !(w[1] < w[0] && w[1] > 0.0)) {
            return Err(Error::invalid(
                "schedule",
                "alpha_bar must be strictly decreasing in (0, 1]",
            ));
        }
        Ok(Self { alpha_bar })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// `β_t = 1 − ᾱ_t/ᾱ_{t−1}` for `t ≥ 1`.
    pub fn beta(&self, t: usize) -> f64 {
        1.0 - self.alpha_bar[t] / self.alpha_bar[t - 1]
    }
}

/// Cosine schedule: `ᾱ_t = f(t)/f(0)`, `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`,
/// with every per-step β clipped to 0.999.
pub fn cosine_schedule(steps: usize, s: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invalid("schedule.steps", "must be at least 1"));
    }
    if !(s > 0.0) {
        return Err(Error::invalid("schedule.s", "must be positive"));
    }
    let f = |t: usize| {
        let x = ((t as f64 / steps as f64 + s) / (1.0 + s)) * FRAC_PI_2;
        x.cos().powi(2)
    };
    let f0 = f(0);
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    alpha_bar.push(1.0);
    let mut prev_raw = 1.0;
    for t in 1..=steps {
        let raw = f(t) / f0;
        let beta = (1.0 - raw / prev_raw).min(MAX_BETA);
        let last = alpha_bar[t - 1];
        alpha_bar.push(last * (1.0 - beta));
        prev_raw = raw;
    }
    NoiseSchedule::from_alpha_bar(alpha_bar)
}

/// `x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε`.
pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    if x0.len() != eps.len() {
        return Err(Error::Shape {
            what: "q_sample noise",
            expected: x0.len(),
            got: eps.len(),
        });
    }
    if t > schedule.steps() {
        return Err(Error::Timestep {
            t,
            max: schedule.steps(),
        });
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}
