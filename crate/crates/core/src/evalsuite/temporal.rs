use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{transform_points, Pose, SceneSequence};

use super::registration::{chamfer, icp, IcpConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtceReport {
    /// Mean `‖R_pred R_gtᵀ − I‖_F`.
    pub rot_err: f64,
    /// Mean `‖t_pred − t_gt‖₂`.
    pub trans_err: f64,
    pub pairs: usize,
}

/// Transforms carrying frame-`t` coordinates into frame `t+1`: `G_{t+1}⁻¹ G_t`.
pub fn gt_step_transforms(poses: &[Pose]) -> Vec<Pose> {
    poses.windows(2).map(|w| w[1].inverse().compose(&w[0])).collect()
}

pub fn transform_errors(pred: &[Pose], gt: &[Pose]) -> Result<TtceReport> {
    if pred.len() != gt.len() {
        return Err(Error::Shape {
            what: "transform list",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("transform list"));
    }
    let (mut rot, mut trans) = (0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        rot += (p.rotation() * g.rotation().transpose() - Matrix3::identity()).norm();
        trans += (p.translation() - g.translation()).norm();
    }
    let n = pred.len() as f64;
    Ok(TtceReport {
        rot_err: rot / n,
        trans_err: trans / n,
        pairs: pred.len(),
    })
}

fn check_poses(seq: &SceneSequence, gt_poses: &[Pose]) -> Result<()> {
    if gt_poses.len() != seq.len() {
        return Err(Error::Shape {
            what: "ground-truth poses",
            expected: seq.len(),
            got: gt_poses.len(),
        });
    }
    Ok(())
}

/// ICP between consecutive frames compared against the ground-truth steps.
pub fn ttce(seq: &SceneSequence, gt_poses: &[Pose], cfg: &IcpConfig) -> Result<TtceReport> {
    check_poses(seq, gt_poses)?;
    if seq.len() < 2 {
        return Err(Error::invalid("ttce", "need at least 2 frames"));
    }
    let pred = seq
        .frames
        .windows(2)
        .map(|w| icp(&w[0].cloud.positions(), &w[1].cloud.positions(), cfg).map(|r| r.pose))
        .collect::<Result<Vec<_>>>()?;
    transform_errors(&pred, &gt_step_transforms(gt_poses))
}

/// Mean chamfer distance between frame `t` and frame `t+k` re-expressed in frame `t`.
pub fn ctc(seq: &SceneSequence, gt_poses: &[Pose], k: usize) -> Result<f64> {
    check_poses(seq, gt_poses)?;
    if k == 0 || seq.len() <= k {
        return Err(Error::invalid(
            "ctc",
            format!("need 1 ≤ k < {} frames, got k = {k}", seq.len()),
        ));
    }
    let mut total = 0.0;
    let pairs = seq.len() - k;
    for t in 0..pairs {
        let to_t = gt_poses[t].inverse().compose(&gt_poses[t + k]);
        let aligned = transform_points(&seq.frames[t + k].cloud, &to_t);
        total += chamfer(&seq.frames[t].cloud.positions(), &aligned.positions())?;
    }
    Ok(total / pairs as f64)
}
