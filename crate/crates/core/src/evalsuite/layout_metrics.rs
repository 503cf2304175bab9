use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{iou_3d, Box3D, Trajectory};
use crate::layout::{box_at, Layout4D, LayoutObject};
use crate::scenegraph::{classify_motion, relate, MotionConfig, RelationConfig, SceneGraph, EGO_ID};

fn objects_by_id(layout: &Layout4D) -> BTreeMap<u32, &LayoutObject> {
    layout.objects.iter().map(|o| (o.node_id, o)).collect()
}

/// Fraction of graph edges whose labels all hold when recomputed from the layout boxes.
pub fn scr(layout: &Layout4D, graph: &SceneGraph, cfg: &RelationConfig) -> Result<f64> {
    let objects = objects_by_id(layout);
    let ego = cfg.ego_box()?;
    let lookup = |id: u32| -> Result<Box3D> {
        if id == EGO_ID {
            Ok(ego)
        } else {
            objects.get(&id).map(|o| o.bbox).ok_or(Error::UnknownNode(id))
        }
    };
    if graph.edges().is_empty() {
        return Err(Error::Empty("scene graph edges"));
    }
    let mut consistent = 0usize;
    for e in graph.edges() {
        let got = relate(&lookup(e.subject)?, &lookup(e.object)?, cfg);
        if e.relations.is_subset(&got) {
            consistent += 1;
        }
    }
    Ok(consistent as f64 / graph.edges().len() as f64)
}

/// Fraction of trajectories (ego included) whose classified motion matches the node state.
pub fn mscr(layout: &Layout4D, graph: &SceneGraph, cfg: &MotionConfig) -> Result<f64> {
    let objects = objects_by_id(layout);
    let mut matched = 0usize;
    for n in graph.nodes() {
        let traj = if n.id == EGO_ID {
            &layout.ego_trajectory
        } else {
            &objects.get(&n.id).ok_or(Error::UnknownNode(n.id))?.trajectory
        };
        if traj.is_empty() {
            return Err(Error::invalid(format!("node {}.trajectory", n.id), "empty"));
        }
        if classify_motion(traj, cfg) == n.motion_state {
            matched += 1;
        }
    }
    Ok(matched as f64 / graph.nodes().len() as f64)
}

/// Propagated boxes for frames `1..=T`.
pub fn frame_boxes(boxes: &[Box3D], trajs: &[Trajectory]) -> Result<Vec<Vec<Box3D>>> {
    if boxes.len() != trajs.len() {
        return Err(Error::Shape {
            what: "trajectories",
            expected: boxes.len(),
            got: trajs.len(),
        });
    }
    let steps = trajs.first().map_or(0, Trajectory::len);
    if trajs.iter().any(|t| t.len() != steps) {
        return Err(Error::invalid("trajectories", "unequal lengths"));
    }
    (1..=steps)
        .map(|t| boxes.iter().zip(trajs).map(|(b, tr)| box_at(b, tr, t)).collect())
        .collect()
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// Colliding unordered pairs over all frames divided by all pairs over all frames.
pub fn bcr(frames: &[Vec<Box3D>]) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for boxes in frames {
        for (i, j) in pairs(boxes.len()) {
            total += 1;
            if iou_3d(&boxes[i], &boxes[j]) > 0.0 {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Empty("box pairs"));
    }
    Ok(hits as f64 / total as f64)
}

/// Fraction of object pairs that collide in at least one of frames `1..=T`.
pub fn tcr(boxes: &[Box3D], trajs: &[Trajectory]) -> Result<f64> {
    let frames = frame_boxes(boxes, trajs)?;
    let n = boxes.len();
    let total = n * n.saturating_sub(1) / 2;
    if total == 0 {
        return Err(Error::Empty("trajectory pairs"));
    }
    let hits = pairs(n)
        .filter(|&(i, j)| frames.iter().any(|f| iou_3d(&f[i], &f[j]) > 0.0))
        .count();
    Ok(hits as f64 / total as f64)
}
