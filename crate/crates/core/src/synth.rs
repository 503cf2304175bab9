//! Ray-cast LiDAR simulator over a flat ground plane and moving oriented boxes.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box3D, Frame, Point, PointCloud, SceneSequence, Trajectory};
use crate::layout::Layout4D;
use crate::rangecodec::SensorConfig;
use crate::warp::{box_in_ego_frame, ego_pose_at};

pub const DEFAULT_GROUND_INTENSITY: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub trajectory: Trajectory,
    /// Return intensity of every face.
    pub material: f64,
}

/// Ground plane, objects and ego path, all in the frame-0 ego frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub ground_z: f64,
    #[serde(default = "default_ground_intensity")]
    pub ground_intensity: f64,
    pub objects: Vec<SceneObject>,
    pub ego_trajectory: Trajectory,
    /// Standard deviation of additive range noise, meters.
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_ground_intensity() -> f64 {
    DEFAULT_GROUND_INTENSITY
}

impl SceneSpec {
    /// Ground and ego path only; the ground sits `sensor_height` below the sensor.
    pub fn open_ground(cfg: &SensorConfig, ego_trajectory: Trajectory) -> Self {
        Self {
            ground_z: -cfg.sensor_height,
            ground_intensity: DEFAULT_GROUND_INTENSITY,
            objects: Vec::new(),
            ego_trajectory,
            noise_sigma: 0.0,
        }
    }

    /// Boxes and trajectories of a layout with a uniform object material.
    pub fn from_layout(layout: &Layout4D, cfg: &SensorConfig, material: f64) -> Result<Self> {
        let spec = Self {
            objects: layout
                .objects
                .iter()
                .map(|o| SceneObject {
                    bbox: o.bbox,
                    trajectory: o.trajectory.clone(),
                    material,
                })
                .collect(),
            ..Self::open_ground(cfg, layout.ego_trajectory.clone())
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn horizon(&self) -> usize {
        self.ego_trajectory.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.ground_z.is_finite() {
            return Err(Error::invalid("scene.ground_z", "non-finite"));
        }
        if !(0.0..=1.0).contains(&self.ground_intensity) {
            return Err(Error::domain("scene.ground_intensity", self.ground_intensity, 0.0, 1.0));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("scene.noise_sigma", "must be finite and >= 0"));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !(0.0..=1.0).contains(&o.material) {
                return Err(Error::domain("scene.objects.material", o.material, 0.0, 1.0));
            }
            if o.trajectory.len() != self.horizon() {
                return Err(Error::invalid(
                    format!("scene.objects[{i}].trajectory"),
                    format!(
                        "length {} differs from ego horizon {}",
                        o.trajectory.len(),
                        self.horizon()
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Object boxes at frame `t` in the ego frame at `t`.
    pub fn boxes_at(&self, t: usize) -> Result<Vec<Box3D>> {
        self.objects
            .iter()
            .map(|o| box_in_ego_frame(&o.bbox, &o.trajectory, &self.ego_trajectory, t))
            .collect()
    }
}

/// Slab test in the box frame. Returns the smallest positive hit distance along
/// `dir` (the exit distance when `origin` is inside).
pub fn intersect_ray_obb(origin: &Vector3<f64>, dir: &Vector3<f64>, b: &Box3D) -> Option<f64> {
    let o = b.to_local(origin);
    let (s, c) = b.yaw().sin_cos();
    let d = Vector3::new(c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z);
    let h = b.half_extents();
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for k in 0..3 {
        if d[k] == 0.0 {
            if o[k].abs() > h[k] {
                return None;
            }
            continue;
        }
        let a = (-h[k] - o[k]) / d[k];
        let b = (h[k] - o[k]) / d[k];
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        t_near = t_near.max(lo);
        t_far = t_far.min(hi);
    }
    if t_near > t_far {
        return None;
    }
    if t_near > 0.0 {
        Some(t_near)
    } else if t_far > 0.0 {
        Some(t_far)
    } else {
        None
    }
}

/// One return per pixel-center ray from the ego pose at `t`, row-major.
/// Misses and returns beyond the maximum range are dropped.
pub fn raycast_frame<R: Rng + ?Sized>(
    spec: &SceneSpec,
    cfg: &SensorConfig,
    t: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    cfg.validate()?;
    spec.validate()?;
    let boxes = spec.boxes_at(t)?;
    let origin = Vector3::zeros();
    let mut out = Vec::with_capacity(cfg.num_pixels());
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let dir = cfg.pixel_ray(row, col);
            let mut best = f64::INFINITY;
            let mut intensity = 0.0;
            if dir.z < 0.0 {
                let r = spec.ground_z / dir.z;
                if r > 0.0 {
                    best = r;
                    intensity = spec.ground_intensity;
                }
            }
            for (b, o) in boxes.iter().zip(&spec.objects) {
                if let Some(r) = intersect_ray_obb(&origin, &dir, b) {
                    if r < best {
                        best = r;
                        intensity = o.material;
                    }
                }
            }
            if !best.is_finite() {
                continue;
            }
            if spec.noise_sigma > 0.0 {
                best += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
            if !(best > 0.0) || (best as f32) as f64 > cfg.max_range {
                continue;
            }
            let p = dir * best;
            out.push(Point::new(p.x, p.y, p.z, intensity));
        }
    }
    Ok(PointCloud { points: out })
}

/// Frames `0..num_frames` with their exact ego poses and ego-frame boxes.
pub fn simulate_sequence<R: Rng + ?Sized>(
    spec: &SceneSpec,
    cfg: &SensorConfig,
    num_frames: usize,
    rng: &mut R,
) -> Result<SceneSequence> {
    if num_frames == 0 || num_frames > spec.horizon() + 1 {
        return Err(Error::invalid(
            "num_frames",
            format!("{num_frames} not in 1..={}", spec.horizon() + 1),
        ));
    }
    let frames = (0..num_frames)
        .map(|t| {
            Ok(Frame {
                cloud: raycast_frame(spec, cfg, t, rng)?,
                pose: ego_pose_at(&spec.ego_trajectory, t)?,
                boxes: Some(spec.boxes_at(t)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SceneSequence::new(frames)
}
