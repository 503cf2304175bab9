use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampler::Denoiser;
use super::schedule::{q_sample, NoiseSchedule};
use crate::error::{Error, Result};

/// Fully-connected layer, weights stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect();
        let bias = (0..outputs).map(|_| rng.random_range(-bound..bound)).collect();
        Self {
            inputs,
            outputs,
            weight,
            bias,
        }
    }

    fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weight.chunks_exact(self.inputs).zip(&self.bias) {
            out.push(b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>());
        }
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

/// One training row: clean sample, condition, diffusion step and the injected noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub x0: Vec<f64>,
    pub cond: Vec<f64>,
    pub t: usize,
    pub eps: Vec<f64>,
}

/// ε-predictor taking `x_τ ⊕ embed(τ) ⊕ cond`, SiLU between hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDenoiser {
    x_dim: usize,
    cond_dim: usize,
    time_dim: usize,
    layers: Vec<Dense>,
}

impl MlpDenoiser {
    pub fn new<R: Rng + ?Sized>(
        x_dim: usize,
        cond_dim: usize,
        time_dim: usize,
        widths: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if x_dim == 0 {
            return Err(Error::invalid("mlp.x_dim", "must be positive"));
        }
        if !time_dim.is_multiple_of(2) {
            return Err(Error::invalid("mlp.time_dim", "must be even"));
        }
        if widths.contains(&0) {
            return Err(Error::invalid("mlp.widths", "zero-width layer"));
        }
        let mut dims = vec![x_dim + time_dim + cond_dim];
        dims.extend_from_slice(widths);
        dims.push(x_dim);
        let layers = dims.windows(2).map(|w| Dense::random(w[0], w[1], rng)).collect();
        Ok(Self {
            x_dim,
            cond_dim,
            time_dim,
            layers,
        })
    }

    /// Rebuilds a model from explicit layers, checking that they chain.
    pub fn from_layers(x_dim: usize, cond_dim: usize, time_dim: usize, layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() || !time_dim.is_multiple_of(2) {
            return Err(Error::invalid("mlp", "needs at least one layer and an even time_dim"));
        }
        let mut expected = x_dim + time_dim + cond_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.inputs != expected || l.weight.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::invalid("mlp.layers", format!("layer {i} does not chain")));
            }
            if l.weight.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::invalid("mlp.layers", format!("layer {i} has non-finite values")));
            }
            expected = l.outputs;
        }
        if expected != x_dim {
            return Err(Error::invalid("mlp.layers", "output width differs from x_dim"));
        }
        Ok(Self {
            x_dim,
            cond_dim,
            time_dim,
            layers,
        })
    }

    pub fn time_dim(&self) -> usize {
        self.time_dim
    }

    pub fn input_dim(&self) -> usize {
        self.x_dim + self.time_dim + self.cond_dim
    }

    /// Hidden widths, excluding input and output.
    pub fn widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.outputs).collect()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// Flattened parameters: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape {
                what: "mlp parameters",
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weight.len();
            l.weight.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Sinusoidal embedding `[sin(τ·ω_i), cos(τ·ω_i)]`, `ω_i = 10000^(−i/half)`.
    pub fn time_embedding(&self, t: usize) -> Vec<f64> {
        let half = self.time_dim / 2;
        let mut out = Vec::with_capacity(self.time_dim);
        let freqs: Vec<f64> = (0..half)
            .map(|i| (-(10000f64).ln() * i as f64 / half as f64).exp())
            .collect();
        out.extend(freqs.iter().map(|w| (t as f64 * w).sin()));
        out.extend(freqs.iter().map(|w| (t as f64 * w).cos()));
        out
    }

    fn input(&self, x: &[f64], t: usize, cond: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.x_dim {
            return Err(Error::Shape {
                what: "mlp input",
                expected: self.x_dim,
                got: x.len(),
            });
        }
        if cond.len() != self.cond_dim {
            return Err(Error::Shape {
                what: "mlp condition",
                expected: self.cond_dim,
                got: cond.len(),
            });
        }
        let mut v = Vec::with_capacity(self.input_dim());
        v.extend_from_slice(x);
        v.extend(self.time_embedding(t));
        v.extend_from_slice(cond);
        Ok(v)
    }

    /// Forward pass keeping every pre-activation.
    fn forward_cached(&self, input: Vec<f64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.layers.len();
        let mut acts = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        acts.push(input);
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(l.outputs);
            l.apply(&acts[i], &mut z);
            if i + 1 < n {
                acts.push(z.iter().map(|&v| silu(v)).collect());
            }
            pre.push(z);
        }
        (acts, pre)
    }

    pub fn forward(&self, x: &[f64], t: usize, cond: &[f64]) -> Result<Vec<f64>> {
        let input = self.input(x, t, cond)?;
        let (_, mut pre) = self.forward_cached(input);
        Ok(pre.pop().unwrap_or_default())
    }
}

impl Denoiser for MlpDenoiser {
    fn dim(&self) -> usize {
        self.x_dim
    }

    fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn predict_eps(&self, x: &[f64], t: usize, cond: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, t, cond)
    }
}

fn noised_input(model: &MlpDenoiser, s: &TrainSample, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    if s.eps.len() != model.x_dim {
        return Err(Error::Shape {
            what: "training noise",
            expected: model.x_dim,
            got: s.eps.len(),
        });
    }
    let xt = q_sample(&s.x0, s.t, &s.eps, schedule)?;
    model.input(&xt, s.t, &s.cond)
}

/// Mean over rows and coordinates of `(ε − ε̂(x_τ, τ, c))²`.
pub fn mlp_loss(model: &MlpDenoiser, batch: &[TrainSample], schedule: &NoiseSchedule) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let mut total = 0.0;
    for s in batch {
        let out = model
            .forward_cached(noised_input(model, s, schedule)?)
            .1
            .pop()
            .unwrap_or_default();
        total += out.iter().zip(&s.eps).map(|(o, e)| (o - e).powi(2)).sum::<f64>();
    }
    Ok(total / (batch.len() * model.x_dim) as f64)
}

/// Loss and its exact gradient, laid out like [`MlpDenoiser::params`].
pub fn mlp_gradients(model: &MlpDenoiser, batch: &[TrainSample], schedule: &NoiseSchedule) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let offsets: Vec<usize> = model
        .layers
        .iter()
        .scan(0, |acc, l| {
            let o = *acc;
            *acc += l.num_params();
            Some(o)
        })
        .collect();
    let mut grads = vec![0.0; model.num_params()];
    let scale = 2.0 / (batch.len() * model.x_dim) as f64;
    let mut total = 0.0;
    for s in batch {
        let (acts, pre) = model.forward_cached(noised_input(model, s, schedule)?);
        let out = &pre[pre.len() - 1];
        let mut g: Vec<f64> = out
            .iter()
            .zip(&s.eps)
            .map(|(o, e)| {
                total += (o - e).powi(2);
                scale * (o - e)
            })
            .collect();
        for li in (0..model.layers.len()).rev() {
            let l = &model.layers[li];
            let a = &acts[li];
            let off = offsets[li];
            let (gw, gb) = grads[off..off + l.num_params()].split_at_mut(l.weight.len());
            for (o, &go) in g.iter().enumerate() {
                gb[o] += go;
                let row = &mut gw[o * l.inputs..(o + 1) * l.inputs];
                for (w, &ai) in row.iter_mut().zip(a) {
                    *w += go * ai;
                }
            }
            if li > 0 {
                let mut back = vec![0.0; l.inputs];
                for (o, &go) in g.iter().enumerate() {
                    let row = &l.weight[o * l.inputs..(o + 1) * l.inputs];
                    for (b, &w) in back.iter_mut().zip(row) {
                        *b += w * go;
                    }
                }
                for (b, &z) in back.iter_mut().zip(&pre[li - 1]) {
                    *b *= silu_grad(z);
                }
                g = back;
            }
        }
    }
    Ok((total / (batch.len() * model.x_dim) as f64, grads))
}
