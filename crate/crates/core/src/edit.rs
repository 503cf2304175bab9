//! Layout edits, range-space edit masks and masked inpainting.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{gaussian_vec, q_sample, respaced_timesteps, reverse_step, Denoiser, NoiseSchedule};
use crate::error::{Error, Result};
use crate::geometry::{iou_3d, Box3D, Trajectory};
use crate::layout::{Layout4D, LayoutObject};
use crate::rangecodec::{encode_tensor, project, RangeTensor, SensorConfig};
use crate::scenegraph::EGO_ID;
use crate::synth::{intersect_ray_obb, raycast_frame, SceneSpec};
use crate::warp::layout_boxes_at;

pub const DEFAULT_DILATION: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum EditOp {
    Insert {
        object: LayoutObject,
    },
    Delete {
        node_id: u32,
    },
    /// Moves the box by `offset` and turns it by `yaw_delta`.
    Drag {
        node_id: u32,
        offset: [f64; 3],
        #[serde(default)]
        yaw_delta: f64,
    },
    Retrajectory {
        node_id: u32,
        trajectory: Trajectory,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOutcome {
    pub layout: Layout4D,
    /// Box pairs that overlap after the edit but did not before.
    pub new_collisions: Vec<(u32, u32)>,
}

fn collisions(layout: &Layout4D) -> BTreeSet<(u32, u32)> {
    let mut out = BTreeSet::new();
    for (i, a) in layout.objects.iter().enumerate() {
        for b in &layout.objects[i + 1..] {
            if iou_3d(&a.bbox, &b.bbox) > 0.0 {
                out.insert((a.node_id.min(b.node_id), a.node_id.max(b.node_id)));
            }
        }
    }
    out
}

fn position(layout: &Layout4D, id: u32) -> Result<usize> {
    layout
        .objects
        .iter()
        .position(|o| o.node_id == id)
        .ok_or(Error::UnknownNode(id))
}

/// Applies one edit. Objects stay sorted by insertion position; inserts go in
/// node-id order. The result is validated against `bounds`.
pub fn apply_edit(layout: &Layout4D, op: &EditOp, bounds: &[f64; 6]) -> Result<EditOutcome> {
    let mut out = layout.clone();
    match op {
        EditOp::Insert { object } => {
            if object.node_id == EGO_ID || out.objects.iter().any(|o| o.node_id == object.node_id) {
                return Err(Error::invalid(
                    "edit.insert.node_id",
                    format!("{} is taken", object.node_id),
                ));
            }
            if object.trajectory.len() != out.horizon() {
                return Err(Error::invalid(
                    "edit.insert.trajectory",
                    format!(
                        "length {} differs from horizon {}",
                        object.trajectory.len(),
                        out.horizon()
                    ),
                ));
            }
            let at = out
                .objects
                .iter()
                .position(|o| o.node_id > object.node_id)
                .unwrap_or(out.objects.len());
            out.objects.insert(at, object.clone());
        }
        EditOp::Delete { node_id } => {
            let i = position(&out, *node_id)?;
            out.objects.remove(i);
        }
        EditOp::Drag {
            node_id,
            offset,
            yaw_delta,
        } => {
            if offset.iter().chain([yaw_delta]).any(|v| !v.is_finite()) {
                return Err(Error::invalid("edit.drag", "non-finite payload"));
            }
            let i = position(&out, *node_id)?;
            let b = out.objects[i].bbox;
            let c = b.center();
            out.objects[i].bbox = Box3D::new(
                [c[0] + offset[0], c[1] + offset[1], c[2] + offset[2]],
                b.size(),
                b.yaw() + yaw_delta,
            )?;
        }
        EditOp::Retrajectory { node_id, trajectory } => {
            if trajectory.len() != out.horizon() {
                return Err(Error::invalid(
                    "edit.retrajectory",
                    format!("length {} differs from horizon {}", trajectory.len(), out.horizon()),
                ));
            }
            let i = position(&out, *node_id)?;
            out.objects[i].trajectory = trajectory.clone();
        }
    }
    out.validate(bounds)?;
    let before = collisions(layout);
    let new_collisions = collisions(&out).difference(&before).copied().collect();
    Ok(EditOutcome {
        layout: out,
        new_collisions,
    })
}

/// Binary `H × W` mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl EditMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    /// Every set pixel of `self` is set in `other`.
    pub fn is_subset_of(&self, other: &EditMask) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| !a || *b)
    }

    /// Chebyshev dilation; columns wrap around, rows do not.
    pub fn dilate(&self, radius: usize) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let (h, w) = (self.height, self.width);
        let mut out = Self::empty(h, w);
        let r = radius as isize;
        for row in 0..h {
            for col in 0..w {
                if !self.get(row, col) {
                    continue;
                }
                for dr in -r..=r {
                    let rr = row as isize + dr;
                    if rr < 0 || rr >= h as isize {
                        continue;
                    }
                    for dc in -r..=r {
                        let cc = (col as isize + dc).rem_euclid(w as isize) as usize;
                        out.data[rr as usize * w + cc] = true;
                    }
                }
            }
        }
        out
    }

    /// One weight per tensor element: the pixel mask repeated over `channels`.
    pub fn channel_weights(&self, channels: usize) -> Vec<f64> {
        self.data
            .iter()
            .flat_map(|&m| std::iter::repeat_n(if m { 1.0 } else { 0.0 }, channels))
            .collect()
    }
}

/// Pixels whose center ray hits any of `boxes` (sensor at the origin).
pub fn ray_hit_mask(boxes: &[Box3D], cfg: &SensorConfig) -> EditMask {
    let mut m = EditMask::empty(cfg.height, cfg.width);
    let origin = Vector3::zeros();
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let dir = cfg.pixel_ray(row, col);
            m.data[row * cfg.width + col] = boxes.iter().any(|b| intersect_ray_obb(&origin, &dir, b).is_some());
        }
    }
    m
}

/// Boxes at frame `t` (ego frame) that differ between the two layouts, in both
/// their old and new placement.
pub fn changed_boxes(old: &Layout4D, new: &Layout4D, t: usize) -> Result<Vec<Box3D>> {
    let a = layout_boxes_at(old, t)?;
    let b = layout_boxes_at(new, t)?;
    let mut out = Vec::new();
    for (id, bx) in &a {
        if !b.iter().any(|(j, by)| j == id && by == bx) {
            out.push(*bx);
        }
    }
    for (id, by) in &b {
        if !a.iter().any(|(i, bx)| i == id && bx == by) {
            out.push(*by);
        }
    }
    Ok(out)
}

/// Mask of pixels touched by the edit at frame `t`, dilated by `dilation` pixels.
pub fn edit_mask_at(old: &Layout4D, new: &Layout4D, cfg: &SensorConfig, dilation: usize, t: usize) -> Result<EditMask> {
    Ok(ray_hit_mask(&changed_boxes(old, new, t)?, cfg).dilate(dilation))
}

/// [`edit_mask_at`] for the first frame.
pub fn edit_mask(old: &Layout4D, new: &Layout4D, cfg: &SensorConfig, dilation: usize) -> Result<EditMask> {
    edit_mask_at(old, new, cfg, dilation, 0)
}

/// `(1 − m)·(√ᾱ·x0 + √(1−ᾱ)·z) + m·d̂` at step `t_prev`, with fresh noise `z`.
pub fn inpaint_blend<R: Rng + ?Sized>(
    denoised: &[f64],
    original: &[f64],
    mask: &[f64],
    t_prev: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    for (what, len) in [("inpaint original", original.len()), ("inpaint mask", mask.len())] {
        if len != denoised.len() {
            return Err(Error::Shape {
                what,
                expected: denoised.len(),
                got: len,
            });
        }
    }
    let z = gaussian_vec(rng, original.len());
    let known = q_sample(original, t_prev, &z, schedule)?;
    Ok(denoised
        .iter()
        .zip(known)
        .zip(mask)
        .map(|((d, k), m)| (1.0 - m) * k + m * d)
        .collect())
}

/// Ancestral sampling that re-imposes the noised original outside the mask after every step.
pub fn inpaint_sample<D, R>(
    denoiser: &D,
    cond: &[f64],
    original: &[f64],
    mask: &[f64],
    schedule: &NoiseSchedule,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    if original.len() != denoiser.dim() {
        return Err(Error::Shape {
            what: "inpaint original",
            expected: denoiser.dim(),
            got: original.len(),
        });
    }
    let taus = respaced_timesteps(schedule.steps(), steps)?;
    let mut x = gaussian_vec(rng, original.len());
    for k in (1..taus.len()).rev() {
        let (t, t_prev) = (taus[k], taus[k - 1]);
        let eps = denoiser.predict_eps(&x, t, cond)?;
        let noise = if t_prev > 0 {
            gaussian_vec(rng, x.len())
        } else {
            Vec::new()
        };
        let stepped = reverse_step(&x, t, t_prev, &eps, schedule, &noise)?;
        x = inpaint_blend(&stepped, original, mask, t_prev, schedule, rng)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedEdit {
    pub original: RangeTensor,
    /// Full re-simulation of the edited scene.
    pub resimulated: RangeTensor,
    pub mask: EditMask,
    pub blended: RangeTensor,
}

/// Uses the simulator as the denoiser: the edited scene is ray-cast and encoded,
/// then blended into the original encoding under the mask at the final step
/// (`ᾱ_0 = 1`, no noise on the kept region).
pub fn simulator_edit<R: Rng + ?Sized>(
    old_spec: &SceneSpec,
    new_spec: &SceneSpec,
    mask: &EditMask,
    cfg: &SensorConfig,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<SimulatedEdit> {
    if mask.height != cfg.height || mask.width != cfg.width {
        return Err(Error::Shape {
            what: "edit mask",
            expected: cfg.num_pixels(),
            got: mask.height * mask.width,
        });
    }
    let original = encode_tensor(&project(&raycast_frame(old_spec, cfg, 0, rng)?, cfg), cfg)?;
    let resimulated = encode_tensor(&project(&raycast_frame(new_spec, cfg, 0, rng)?, cfg), cfg)?;
    let x0: Vec<f64> = original.data.iter().map(|&v| v as f64).collect();
    let d: Vec<f64> = resimulated.data.iter().map(|&v| v as f64).collect();
    let w = mask.channel_weights(original.channels);
    let mixed = inpaint_blend(&d, &x0, &w, 0, schedule, rng)?;
    let blended = RangeTensor::new(
        original.height,
        original.width,
        original.channels,
        mixed.into_iter().map(|v| v as f32).collect(),
    )?;
    Ok(SimulatedEdit {
        original,
        resimulated,
        mask: mask.clone(),
        blended,
    })
}
