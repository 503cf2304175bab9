use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

type Tree = ImmutableKdTree<f64, u64, 3, 32>;

fn mean_nearest_sq(query: &[[f64; 3]], tree: &Tree) -> f64 {
    let s: f64 = query
        .iter()
        .map(|q| tree.nearest_one::<SquaredEuclidean>(q).distance)
        .sum();
    s / query.len() as f64
}

/// Mean squared nearest-neighbour distance from `x` to `y` plus the reverse.
pub fn chamfer(x: &[[f64; 3]], y: &[[f64; 3]]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("chamfer point set"));
    }
    let tx = Tree::new_from_slice(x);
    let ty = Tree::new_from_slice(y);
    Ok(mean_nearest_sq(x, &ty) + mean_nearest_sq(y, &tx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop once the mean squared error improves by less than this.
    pub tol: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps source coordinates onto the target.
    pub pose: Pose,
    /// Mean squared correspondence distance, one entry per correspondence search.
    pub mse_history: Vec<f64>,
    pub converged: bool,
}

impl IcpResult {
    pub fn final_mse(&self) -> f64 {
        *self.mse_history.last().expect("at least one evaluation")
    }
}

fn check_spread(points: &[[f64; 3]], what: &'static str) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{what}: need at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + Vector3::from(*p)) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = Vector3::from(*p) - mean;
        cov += d * d.transpose();
    }
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::Degenerate(format!("{what}: points are collinear")));
    }
    Ok(())
}

/// Least-squares rigid transform taking `src[i]` onto `dst[i]` (SVD with reflection guard).
pub fn kabsch(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Pose> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::Shape {
            what: "kabsch correspondences",
            expected: src.len(),
            got: dst.len(),
        });
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Numeric("svd failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Numeric("svd failed".into()))?;
    let v = v_t.transpose();
    let sign = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, if sign == 0.0 { 1.0 } else { sign }));
    let r = v * fix * u.transpose();
    let t = cd - r * cs;
    Pose::new(r, t)
}

/// Point-to-point ICP estimating the pose that maps `source` onto `target`.
pub fn icp(source: &[[f64; 3]], target: &[[f64; 3]], cfg: &IcpConfig) -> Result<IcpResult> {
    check_spread(source, "icp source")?;
    check_spread(target, "icp target")?;
    if cfg.max_iters == 0 {
        return Err(Error::invalid("icp.max_iters", "must be at least 1"));
    }
    let tree = Tree::new_from_slice(target);
    let src: Vec<Vector3<f64>> = source.iter().map(|p| Vector3::from(*p)).collect();
    let mut pose = Pose::identity();
    let mut history = Vec::new();
    let mut matched = vec![Vector3::zeros(); src.len()];
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let mut sum = 0.0;
        for (p, m) in src.iter().zip(matched.iter_mut()) {
            let q = pose.transform_vec(p);
            let nn = tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
            sum += nn.distance;
            *m = Vector3::from(target[nn.item as usize]);
        }
        let mse = sum / src.len() as f64;
        if let Some(&prev) = history.last() {
            if prev - mse < cfg.tol {
                history.push(mse);
                converged = true;
                break;
            }
        }
        history.push(mse);
        pose = kabsch(&src, &matched)?;
    }
    if !converged {
        let sum: f64 = src
            .iter()
            .map(|p| {
                let q = pose.transform_vec(p);
                tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]).distance
            })
            .sum();
        history.push(sum / src.len() as f64);
    }
    log::debug!(
        "icp: {} evaluations, final mse {:.3e}",
        history.len(),
        history.last().unwrap()
    );
    Ok(IcpResult {
        pose,
        mse_history: history,
        converged,
    })
}
