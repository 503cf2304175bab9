//! Ego and object warps between frames and the warped conditioning map.
//!
//! Ego poses `G_t` map the ego frame at `t` into the frame-0 ego frame (the world).
//! Points observed at frame `s` are re-expressed at frame `t` by `G_t⁻¹ G_s`.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::Result;
use crate::geometry::{transform_points, Box3D, PointCloud, Pose, Trajectory};
use crate::layout::{box_at, Layout4D};
use crate::rangecodec::{project, RangeImage, SensorConfig};

/// Ego pose at frame `t`: translation `(Δx_t, Δy_t, 0)` and yaw from the last
/// non-zero step direction. Frame 0 is the identity.
pub fn ego_pose_at(ego: &Trajectory, t: usize) -> Result<Pose> {
    let d = ego.at(t)?;
    let yaw = ego.headings(0.0)[t];
    Ok(Pose::from_yaw(yaw, Vector3::new(d[0], d[1], 0.0)))
}

/// `G_0 … G_T`.
pub fn ego_poses(ego: &Trajectory) -> Vec<Pose> {
    let headings = ego.headings(0.0);
    (0..=ego.len())
        .map(|t| {
            let d = ego.at(t).expect("t within horizon");
            Pose::from_yaw(headings[t], Vector3::new(d[0], d[1], 0.0))
        })
        .collect()
}

/// `ΔG = G_t G_prev⁻¹`, so that `ΔG · G_prev = G_t`.
pub fn relative_motion(g_t: &Pose, g_prev: &Pose) -> Pose {
    g_t.compose(&g_prev.inverse())
}

/// Maps ego-frame coordinates at `from` into the ego frame at `to`.
pub fn ego_motion(ego: &Trajectory, from: usize, to: usize) -> Result<Pose> {
    let g_from = ego_pose_at(ego, from)?;
    let g_to = ego_pose_at(ego, to)?;
    Ok(g_to.inverse().compose(&g_from))
}

/// `B_t = G_t⁻¹ G_prev B_prev`.
pub fn warp_background(prev: &PointCloud, g_t: &Pose, g_prev: &Pose) -> PointCloud {
    transform_points(prev, &g_t.inverse().compose(g_prev))
}

/// World pose of an object (box frame → frame-0 world) at frame `t`.
pub fn object_pose_at(initial: &Box3D, traj: &Trajectory, t: usize) -> Result<Pose> {
    let b = box_at(initial, traj, t)?;
    Ok(Pose::from_yaw(b.yaw(), b.center_vec()))
}

/// Rigid motion carrying the object's points from the ego frame at `from` to
/// the ego frame at `to`.
pub fn object_motion(initial: &Box3D, traj: &Trajectory, ego: &Trajectory, from: usize, to: usize) -> Result<Pose> {
    let g_from = ego_pose_at(ego, from)?;
    let g_to = ego_pose_at(ego, to)?;
    let o_from = object_pose_at(initial, traj, from)?;
    let o_to = object_pose_at(initial, traj, to)?;
    Ok(g_to
        .inverse()
        .compose(&o_to)
        .compose(&o_from.inverse())
        .compose(&g_from))
}

/// The object box at frame `t`, expressed in the ego frame at `t`.
pub fn box_in_ego_frame(initial: &Box3D, traj: &Trajectory, ego: &Trajectory, t: usize) -> Result<Box3D> {
    let g_t = ego_pose_at(ego, t)?;
    Ok(box_at(initial, traj, t)?.transformed(&g_t.inverse()))
}

/// Frame-0 object points and box carried to frame `t` in the ego frame at `t`.
pub fn warp_object(
    points: &PointCloud,
    initial: &Box3D,
    traj: &Trajectory,
    ego: &Trajectory,
    t: usize,
) -> Result<(PointCloud, Box3D)> {
    warp_object_between(points, initial, traj, ego, 0, t)
}

/// Object points observed at frame `from` carried to frame `to`.
pub fn warp_object_between(
    points: &PointCloud,
    initial: &Box3D,
    traj: &Trajectory,
    ego: &Trajectory,
    from: usize,
    to: usize,
) -> Result<(PointCloud, Box3D)> {
    let m = object_motion(initial, traj, ego, from, to)?;
    Ok((transform_points(points, &m), box_in_ego_frame(initial, traj, ego, to)?))
}

/// Background plus per-object foreground sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameDecomposition {
    pub background: PointCloud,
    pub foreground: BTreeMap<u32, PointCloud>,
}

impl FrameDecomposition {
    pub fn len(&self) -> usize {
        self.background.len() + self.foreground.values().map(PointCloud::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Face tolerance for [`split_fg_bg`]: ray-cast surface returns land on the
/// face only up to rounding.
pub const SPLIT_MARGIN: f64 = 1e-6;

/// Assigns each point to the first box (in list order) that contains it,
/// within [`SPLIT_MARGIN`]; everything else is background. Every id gets an
/// entry, possibly empty.
pub fn split_fg_bg(cloud: &PointCloud, boxes: &[(u32, Box3D)]) -> FrameDecomposition {
    let mut out = FrameDecomposition {
        background: PointCloud::empty(),
        foreground: boxes.iter().map(|(id, _)| (*id, PointCloud::empty())).collect(),
    };
    for p in &cloud.points {
        let xyz = p.xyz();
        match boxes.iter().find(|(_, b)| b.contains_with_margin(&xyz, SPLIT_MARGIN)) {
            Some((id, _)) => out.foreground.get_mut(id).expect("seeded above").points.push(*p),
            None => out.background.points.push(*p),
        }
    }
    out
}

/// Layout boxes at frame `t` in that frame's ego coordinates, keyed by node id.
pub fn layout_boxes_at(layout: &Layout4D, t: usize) -> Result<Vec<(u32, Box3D)>> {
    layout
        .objects
        .iter()
        .map(|o| {
            Ok((
                o.node_id,
                box_in_ego_frame(&o.bbox, &o.trajectory, &layout.ego_trajectory, t)?,
            ))
        })
        .collect()
}

/// The three warped sources: frame-0 background, frame `t−1` background and
/// frame `t−1` foregrounds, all in the ego frame at `t`.
pub fn conditioning_points(
    first: &FrameDecomposition,
    prev: &FrameDecomposition,
    layout: &Layout4D,
    t: usize,
) -> Result<PointCloud> {
    let ego = &layout.ego_trajectory;
    if t == 0 {
        return Err(crate::Error::Timestep { t, max: ego.len() });
    }
    let mut out = transform_points(&first.background, &ego_motion(ego, 0, t)?);
    out.extend(&transform_points(&prev.background, &ego_motion(ego, t - 1, t)?));
    for o in &layout.objects {
        if let Some(f) = prev.foreground.get(&o.node_id) {
            let m = object_motion(&o.bbox, &o.trajectory, ego, t - 1, t)?;
            out.extend(&transform_points(f, &m));
        }
    }
    Ok(out)
}

/// Projection of [`conditioning_points`] with the nearest-depth rule.
pub fn conditioning_map(
    first: &FrameDecomposition,
    prev: &FrameDecomposition,
    layout: &Layout4D,
    t: usize,
    cfg: &SensorConfig,
) -> Result<RangeImage> {
    Ok(project(&conditioning_points(first, prev, layout, t)?, cfg))
}
