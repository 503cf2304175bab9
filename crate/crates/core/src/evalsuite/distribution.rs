use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// `[x_min, y_min, x_max, y_max]`.
pub const DEFAULT_BEV_BOUNDS: [f64; 4] = [-80.0, -80.0, 80.0, 80.0];
pub const DEFAULT_BEV_BINS: usize = 100;

/// Normalized bird's-eye-view occupancy, row-major over `(y, x)` bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevHistogram {
    pub bounds: [f64; 4],
    pub bins: usize,
    pub mass: Vec<f64>,
    /// No point fell inside the bounds; `mass` is all zeros.
    pub empty: bool,
}

impl BevHistogram {
    /// Bin edge lengths along x and y in meters.
    pub fn bin_size(&self) -> [f64; 2] {
        [
            (self.bounds[2] - self.bounds[0]) / self.bins as f64,
            (self.bounds[3] - self.bounds[1]) / self.bins as f64,
        ]
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.mass[iy * self.bins + ix]
    }
}

/// Points outside the bounds are dropped; the upper edge belongs to the last bin.
pub fn bev_histogram(cloud: &PointCloud, bounds: [f64; 4], bins: usize) -> Result<BevHistogram> {
    if bins == 0 {
        return Err(Error::invalid("bev.bins", "must be at least 1"));
    }
    if !(bounds[2] > bounds[0] && bounds[3] > bounds[1]) || bounds.iter().any(|b| !b.is_finite()) {
        return Err(Error::invalid(
            "bev.bounds",
            "need finite x_min < x_max and y_min < y_max",
        ));
    }
    let mut mass = vec![0.0; bins * bins];
    let mut count = 0usize;
    let sx = bins as f64 / (bounds[2] - bounds[0]);
    let sy = bins as f64 / (bounds[3] - bounds[1]);
    for p in &cloud.points {
        if p.x < bounds[0] || p.x > bounds[2] || p.y < bounds[1] || p.y > bounds[3] {
            continue;
        }
        let ix = (((p.x - bounds[0]) * sx) as usize).min(bins - 1);
        let iy = (((p.y - bounds[1]) * sy) as usize).min(bins - 1);
        mass[iy * bins + ix] += 1.0;
        count += 1;
    }
    if count > 0 {
        let inv = 1.0 / count as f64;
        mass.iter_mut().for_each(|m| *m *= inv);
    }
    Ok(BevHistogram {
        bounds,
        bins,
        mass,
        empty: count == 0,
    })
}

fn kl_to_mix(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).log2())
        .sum()
}

/// Base-2 Jensen–Shannon divergence of two mass vectors.
pub fn jsd_masses(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape {
            what: "jsd distributions",
            expected: p.len(),
            got: q.len(),
        });
    }
    if p.iter().chain(q).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("jsd", "masses must be finite and non-negative"));
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let d = 0.5 * kl_to_mix(p, &m) + 0.5 * kl_to_mix(q, &m);
    Ok(d.clamp(0.0, 1.0))
}

pub fn jsd(p: &BevHistogram, q: &BevHistogram) -> Result<f64> {
    if p.bins != q.bins || p.bounds != q.bounds {
        return Err(Error::Shape {
            what: "bev histogram bins",
            expected: p.bins,
            got: q.bins,
        });
    }
    jsd_masses(&p.mass, &q.mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Kernel {
    Linear,
    Gaussian {
        sigma: f64,
    },
    /// Gaussian with bandwidth set to the median pairwise distance of the pooled samples.
    #[default]
    GaussianMedian,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median_bandwidth(pooled: &[&[f64]]) -> f64 {
    let mut d = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Biased (V-statistic) estimate of squared MMD.
pub fn mmd(x: &[Vec<f64>], y: &[Vec<f64>], kernel: Kernel) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("mmd sample set"));
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().chain(y).find(|v| v.len() != dim) {
        return Err(Error::Shape {
            what: "mmd sample",
            expected: dim,
            got: bad.len(),
        });
    }
    let k: Box<dyn Fn(&[f64], &[f64]) -> f64> = match kernel {
        Kernel::Linear => Box::new(|a, b| a.iter().zip(b).map(|(p, q)| p * q).sum()),
        Kernel::Gaussian { sigma } => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::invalid("mmd.sigma", "must be positive"));
            }
            let g = 1.0 / (2.0 * sigma * sigma);
            Box::new(move |a, b| (-sq_dist(a, b) * g).exp())
        }
        Kernel::GaussianMedian => {
            let pooled: Vec<&[f64]> = x.iter().chain(y).map(|v| v.as_slice()).collect();
            let sigma = median_bandwidth(&pooled);
            let g = 1.0 / (2.0 * sigma * sigma);
            Box::new(move |a, b| (-sq_dist(a, b) * g).exp())
        }
    };
    let mean_k = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let mut s = 0.0;
        for u in a {
            for v in b {
                s += k(u, v);
            }
        }
        s / (a.len() * b.len()) as f64
    };
    Ok((mean_k(x, x) + mean_k(y, y) - 2.0 * mean_k(x, y)).max(0.0))
}

/// Feature mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl FeatureSet {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Shape {
                what: "feature covariance",
                expected: d,
                got: cov.nrows(),
            });
        }
        let scale = cov.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::invalid("feature covariance", "not symmetric"));
                }
            }
        }
        Ok(Self { mean, cov })
    }

    /// Sample mean and unbiased covariance of `n × D` features (zero covariance for one sample).
    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::Empty("feature set"));
        }
        let d = features[0].len();
        if let Some(bad) = features.iter().find(|f| f.len() != d) {
            return Err(Error::Shape {
                what: "feature vector",
                expected: d,
                got: bad.len(),
            });
        }
        let mut mean = DVector::zeros(d);
        for f in features {
            mean += DVector::from_column_slice(f);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(d, d);
        if n > 1 {
            for f in features {
                let c = DVector::from_column_slice(f) - &mean;
                cov += &c * c.transpose();
            }
            cov /= (n - 1) as f64;
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

const PSD_TOLERANCE: f64 = -1e-8;

/// Eigen-decomposes a symmetric matrix and returns `V diag(√λ) Vᵀ`.
fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut roots = eig.eigenvalues.clone();
    for l in roots.iter_mut() {
        if *l < PSD_TOLERANCE {
            return Err(Error::Numeric(format!("{what} has eigenvalue {l:.3e}")));
        }
        *l = l.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// `‖μg − μr‖² + Tr(Σg + Σr − 2 (Σg^½ Σr Σg^½)^½)`.
pub fn frechet(generated: &FeatureSet, reference: &FeatureSet) -> Result<f64> {
    if generated.dim() != reference.dim() {
        return Err(Error::Shape {
            what: "feature dimension",
            expected: generated.dim(),
            got: reference.dim(),
        });
    }
    let dm = (&generated.mean - &reference.mean).norm_squared();
    let sg = psd_sqrt(&generated.cov, "generated covariance")?;
    let inner = &sg * &reference.cov * &sg;
    let cross = psd_sqrt(&inner, "covariance product")?;
    let tr = generated.cov.trace() + reference.cov.trace() - 2.0 * cross.trace();
    Ok((dm + tr).max(0.0))
}
