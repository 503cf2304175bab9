//! The 4D layout tuple (box, trajectory, canonical shape per object): fixed-size
//! encodings, overlap penalties, per-node condition features and tri-branch sampling.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{gaussian_vec, p_sample_loop, Denoiser, NoiseSchedule, TrainExample};
use crate::error::{Error, Result};
use crate::geometry::{iou_3d, Box3D, Point, PointCloud, Trajectory};
use crate::scenegraph::{Category, MotionState, Relation, SceneGraph, EGO_ID, OBJECT_VOLUME};

pub const DEFAULT_BOUNDS: [f64; 6] = OBJECT_VOLUME;
pub const DEFAULT_DISP_BOUND: f64 = 20.0;
pub const BOX_CODE_DIM: usize = 8;
/// Coordinates per canonical shape point: x, y, z, intensity.
pub const SHAPE_POINT_DIM: usize = 4;
const LOG_SIZE_LIMIT: f64 = 10.0;

/// `(cx, cy, cz, ln w, ln l, ln h, sin ψ, cos ψ)` with centers scaled into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCode(pub [f64; BOX_CODE_DIM]);

fn check_bounds(bounds: &[f64; 6]) -> Result<()> {
    if (0..3).all(|i| bounds[i].is_finite() && bounds[i + 3].is_finite() && bounds[i] < bounds[i + 3]) {
        Ok(())
    } else {
        Err(Error::invalid("bounds", "need finite min < max on every axis"))
    }
}

pub fn encode_box(b: &Box3D, bounds: &[f64; 6]) -> Result<BoxCode> {
    check_bounds(bounds)?;
    const AXES: [&str; 3] = ["box.center.x", "box.center.y", "box.center.z"];
    let c = b.center();
    let mut code = [0.0; BOX_CODE_DIM];
    for i in 0..3 {
        let (lo, hi) = (bounds[i], bounds[i + 3]);
        if !(lo..=hi).contains(&c[i]) {
            return Err(Error::domain(AXES[i], c[i], lo, hi));
        }
        code[i] = (c[i] - lo) / (hi - lo);
    }
    for (k, s) in b.size().iter().enumerate() {
        code[3 + k] = s.ln();
    }
    let (s, co) = b.yaw().sin_cos();
    code[6] = s;
    code[7] = co;
    Ok(BoxCode(code))
}

/// Inverse of [`encode_box`]. Out-of-range centers and log sizes are clamped and
/// the `(sin, cos)` pair is renormalized, so any finite code decodes.
pub fn decode_box(code: &BoxCode, bounds: &[f64; 6]) -> Result<Box3D> {
    check_bounds(bounds)?;
    let v = code.0;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite box code".into()));
    }
    let mut center = [0.0; 3];
    for i in 0..3 {
        center[i] = bounds[i] + v[i].clamp(0.0, 1.0) * (bounds[i + 3] - bounds[i]);
    }
    let size = [3, 4, 5].map(|k| v[k].clamp(-LOG_SIZE_LIMIT, LOG_SIZE_LIMIT).exp());
    let norm = v[6].hypot(v[7]);
    let yaw = if norm > 0.0 {
        (v[6] / norm).atan2(v[7] / norm)
    } else {
        0.0
    };
    Box3D::new(center, size, yaw)
}

/// Flattens displacements to `[x1, y1, x2, y2, …] / disp_bound`.
pub fn encode_trajectory(traj: &Trajectory, disp_bound: f64) -> Result<Vec<f64>> {
    if !(disp_bound > 0.0 && disp_bound.is_finite()) {
        return Err(Error::invalid("disp_bound", "must be positive"));
    }
    let mut out = Vec::with_capacity(2 * traj.len());
    for d in traj.displacements() {
        for &v in d {
            if v.abs() > disp_bound {
                return Err(Error::domain("trajectory displacement", v, -disp_bound, disp_bound));
            }
            out.push(v / disp_bound);
        }
    }
    Ok(out)
}

/// Inverse of [`encode_trajectory`]; values are clamped to `[-1, 1]` first.
pub fn decode_trajectory(code: &[f64], disp_bound: f64) -> Result<Trajectory> {
    if !(disp_bound > 0.0 && disp_bound.is_finite()) {
        return Err(Error::invalid("disp_bound", "must be positive"));
    }
    if code.is_empty() || !code.len().is_multiple_of(2) {
        return Err(Error::invalid(
            "trajectory code",
            format!("length {} is not a positive even number", code.len()),
        ));
    }
    if code.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite trajectory code".into()));
    }
    Trajectory::new(
        code.chunks_exact(2)
            .map(|c| [c[0].clamp(-1.0, 1.0) * disp_bound, c[1].clamp(-1.0, 1.0) * disp_bound])
            .collect(),
    )
}

/// Object points in the box frame scaled by the half extents, intensity mapped to `[-1, 1]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CanonicalShape {
    pub points: Vec<[f64; SHAPE_POINT_DIM]>,
}

impl CanonicalShape {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn canonicalize_points(cloud: &PointCloud, b: &Box3D) -> Result<CanonicalShape> {
    if cloud.is_empty() {
        return Err(Error::Empty("points to canonicalize"));
    }
    let h = b.half_extents();
    Ok(CanonicalShape {
        points: cloud
            .points
            .iter()
            .map(|p| {
                let q = b.to_local(&p.xyz());
                [q.x / h[0], q.y / h[1], q.z / h[2], 2.0 * p.intensity - 1.0]
            })
            .collect(),
    })
}

pub fn decanonicalize_points(shape: &CanonicalShape, b: &Box3D) -> PointCloud {
    let h = b.half_extents();
    shape
        .points
        .iter()
        .map(|c| {
            let w = b.to_world(&Vector3::new(c[0] * h[0], c[1] * h[1], c[2] * h[2]));
            Point::new(w.x, w.y, w.z, ((c[3] + 1.0) / 2.0).clamp(0.0, 1.0))
        })
        .collect()
}

/// Mean of `max(0, IoU − τ)` over unordered pairs; zero with fewer than two boxes.
pub fn box_overlap_penalty(boxes: &[Box3D], tau: f64) -> f64 {
    let n = boxes.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += (iou_3d(&boxes[i], &boxes[j]) - tau).max(0.0);
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// The box moved to frame `t` of its trajectory, heading taken from the step direction.
pub fn box_at(b: &Box3D, traj: &Trajectory, t: usize) -> Result<Box3D> {
    let d = traj.at(t)?;
    let c = b.center();
    let yaw = traj.headings(b.yaw())[t];
    Box3D::new([c[0] + d[0], c[1] + d[1], c[2]], b.size(), yaw)
}

fn check_aligned(boxes: &[Box3D], trajs: &[Trajectory]) -> Result<usize> {
    if boxes.len() != trajs.len() {
        return Err(Error::invalid(
            "trajectories",
            format!("{} trajectories for {} boxes", trajs.len(), boxes.len()),
        ));
    }
    let steps = trajs.first().map_or(0, Trajectory::len);
    if trajs.iter().any(|t| t.len() != steps) {
        return Err(Error::invalid("trajectories", "unequal lengths"));
    }
    Ok(steps)
}

/// [`box_overlap_penalty`] of the propagated boxes averaged over frames `1..=T`.
pub fn trajectory_overlap_penalty(boxes: &[Box3D], trajs: &[Trajectory], tau: f64) -> Result<f64> {
    let steps = check_aligned(boxes, trajs)?;
    if boxes.len() < 2 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for t in 1..=steps {
        let moved = boxes
            .iter()
            .zip(trajs)
            .map(|(b, tr)| box_at(b, tr, t))
            .collect::<Result<Vec<_>>>()?;
        sum += box_overlap_penalty(&moved, tau);
    }
    Ok(sum / steps as f64)
}

fn colliding_pairs(boxes: &[Box3D]) -> usize {
    let mut n = 0;
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if iou_3d(&boxes[i], &boxes[j]) > 0.0 {
                n += 1;
            }
        }
    }
    n
}

/// Degree counts are divided by this and clamped to 1.
pub const DEGREE_SCALE: f64 = 64.0;
/// category one-hot, motion one-hot, in/out degree, out-edge label histogram,
/// labels of the edge toward ego.
pub const CONDITION_DIM: usize = 9 + 4 + 2 + 9 + 9;

/// Deterministic per-node condition features, all in `[0, 1]`.
pub fn featurize_condition(graph: &SceneGraph, id: u32) -> Result<Vec<f64>> {
    let node = graph.node(id)?;
    let mut v = vec![0.0; CONDITION_DIM];
    v[node.category.index()] = 1.0;
    v[9 + node.motion_state.index()] = 1.0;
    v[13] = (graph.in_degree(id) as f64 / DEGREE_SCALE).min(1.0);
    v[14] = (graph.out_degree(id) as f64 / DEGREE_SCALE).min(1.0);
    let mut hist = [0usize; 9];
    for e in graph.edges().iter().filter(|e| e.subject == id) {
        for r in &e.relations {
            hist[r.index()] += 1;
        }
    }
    for (k, h) in hist.iter().enumerate() {
        v[15 + k] = (*h as f64 / DEGREE_SCALE).min(1.0);
    }
    if let Some(e) = graph.edge(id, EGO_ID) {
        for r in &e.relations {
            v[24 + r.index()] = 1.0;
        }
    }
    Ok(v)
}

/// Relation label for a condition-vector slot, for inspection.
pub fn condition_relation(slot: usize) -> Option<Relation> {
    match slot {
        15..=23 => Some(Relation::ALL[slot - 15]),
        24..=32 => Some(Relation::ALL[slot - 24]),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutObject {
    pub node_id: u32,
    pub category: Category,
    pub motion_state: MotionState,
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub trajectory: Trajectory,
    pub shape: CanonicalShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout4D {
    pub ego_trajectory: Trajectory,
    pub objects: Vec<LayoutObject>,
}

impl Layout4D {
    pub fn horizon(&self) -> usize {
        self.ego_trajectory.len()
    }

    pub fn boxes(&self) -> Vec<Box3D> {
        self.objects.iter().map(|o| o.bbox).collect()
    }

    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.objects.iter().map(|o| o.trajectory.clone()).collect()
    }

    /// Boxes inside `bounds`, uniform trajectory lengths, shapes inside `[-1, 1]`.
    pub fn validate(&self, bounds: &[f64; 6]) -> Result<()> {
        check_bounds(bounds)?;
        let steps = self.horizon();
        for o in &self.objects {
            let c = o.bbox.center();
            if (0..3).any(|i| c[i] < bounds[i] || c[i] > bounds[i + 3]) {
                return Err(Error::invalid(
                    format!("layout.objects[{}].box", o.node_id),
                    "outside bounds",
                ));
            }
            if o.trajectory.len() != steps {
                return Err(Error::invalid(
                    format!("layout.objects[{}].trajectory", o.node_id),
                    format!("length {} differs from ego horizon {steps}", o.trajectory.len()),
                ));
            }
            if o.shape.points.iter().flatten().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::invalid(
                    format!("layout.objects[{}].shape", o.node_id),
                    "outside [-1, 1]",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub bounds: [f64; 6],
    pub disp_bound: f64,
    /// Future frames per trajectory.
    pub horizon: usize,
    pub shape_points: usize,
    pub sample_steps: usize,
    /// Extra attempts when sampled boxes collide.
    pub reject_k: usize,
    pub iou_threshold: f64,
    /// Weight of the summed overlap penalties in the best-of score.
    pub penalty_weight: f64,
    /// Ego box size `(w, l, h)` used to condition the ego trajectory.
    pub ego_size: [f64; 3],
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            bounds: DEFAULT_BOUNDS,
            disp_bound: DEFAULT_DISP_BOUND,
            horizon: 5,
            shape_points: 512,
            sample_steps: 256,
            reject_k: 8,
            iou_threshold: 0.01,
            penalty_weight: 0.01,
            ego_size: [1.8, 4.0, 1.5],
        }
    }
}

/// Denoisers for the three branches. Boxes see the node condition; trajectories
/// and per-point shapes see the condition followed by the encoded box.
#[derive(Clone, Copy)]
pub struct LayoutModels<'a> {
    pub boxes: &'a dyn Denoiser,
    pub trajectories: &'a dyn Denoiser,
    pub shapes: &'a dyn Denoiser,
}

impl LayoutModels<'_> {
    fn check(&self, cfg: &LayoutConfig) -> Result<()> {
        let expect = [
            (
                "box branch",
                self.boxes.dim(),
                BOX_CODE_DIM,
                self.boxes.cond_dim(),
                CONDITION_DIM,
            ),
            (
                "trajectory branch",
                self.trajectories.dim(),
                2 * cfg.horizon,
                self.trajectories.cond_dim(),
                CONDITION_DIM + BOX_CODE_DIM,
            ),
            (
                "shape branch",
                self.shapes.dim(),
                SHAPE_POINT_DIM,
                self.shapes.cond_dim(),
                CONDITION_DIM + BOX_CODE_DIM,
            ),
        ];
        for (what, dim, want_dim, cdim, want_cdim) in expect {
            if dim != want_dim || cdim != want_cdim {
                return Err(Error::invalid(
                    what,
                    format!("dims ({dim}, cond {cdim}), expected ({want_dim}, cond {want_cdim})"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSample {
    pub layout: Layout4D,
    /// Attempts discarded because sampled boxes collided.
    pub rejections: usize,
    /// Weighted penalty of the returned boxes and trajectories.
    pub penalty: f64,
}

fn with_code(cond: &[f64], code: &BoxCode) -> Vec<f64> {
    let mut v = cond.to_vec();
    v.extend_from_slice(&code.0);
    v
}

/// Samples boxes and trajectories for every object node, redrawing up to
/// `reject_k` times while any pair of boxes overlaps; if every attempt collides,
/// keeps the one with the lowest weighted penalty (ties: fewest colliding pairs).
/// Shapes and the ego trajectory are drawn once afterwards.
pub fn sample_layout(
    graph: &SceneGraph,
    models: LayoutModels<'_>,
    schedule: &NoiseSchedule,
    cfg: &LayoutConfig,
    seed: u64,
) -> Result<LayoutSample> {
    check_bounds(&cfg.bounds)?;
    if cfg.horizon == 0 {
        return Err(Error::invalid("layout.horizon", "must be at least 1"));
    }
    models.check(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<_> = graph.object_nodes().collect();
    let conds = nodes
        .iter()
        .map(|n| featurize_condition(graph, n.id))
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<(f64, usize, Vec<Box3D>, Vec<BoxCode>, Vec<Trajectory>)> = None;
    let mut rejections = 0;
    for _ in 0..=cfg.reject_k {
        let mut boxes = Vec::with_capacity(nodes.len());
        let mut codes = Vec::with_capacity(nodes.len());
        for c in &conds {
            let raw = p_sample_loop(models.boxes, c, schedule, cfg.sample_steps, &mut rng)?;
            let b = decode_box(&BoxCode(raw.try_into().expect("box branch width checked")), &cfg.bounds)?;
            codes.push(encode_box(&b, &cfg.bounds)?);
            boxes.push(b);
        }
        let mut trajs = Vec::with_capacity(nodes.len());
        for (c, code) in conds.iter().zip(&codes) {
            let raw = p_sample_loop(
                models.trajectories,
                &with_code(c, code),
                schedule,
                cfg.sample_steps,
                &mut rng,
            )?;
            trajs.push(decode_trajectory(&raw, cfg.disp_bound)?);
        }
        let collisions = colliding_pairs(&boxes);
        let score = cfg.penalty_weight
            * (box_overlap_penalty(&boxes, cfg.iou_threshold)
                + trajectory_overlap_penalty(&boxes, &trajs, cfg.iou_threshold)?);
        let better = best
            .as_ref()
            .is_none_or(|(s, k, ..)| collisions == 0 || (score, collisions) < (*s, *k));
        if better {
            best = Some((score, collisions, boxes, codes, trajs));
        }
        if collisions == 0 {
            break;
        }
        rejections += 1;
    }
    let (penalty, _, boxes, codes, trajs) = best.expect("at least one attempt");

    let ego_cond = featurize_condition(graph, EGO_ID)?;
    let ego_code = encode_box(&Box3D::new([0.0; 3], cfg.ego_size, 0.0)?, &cfg.bounds)?;
    let raw = p_sample_loop(
        models.trajectories,
        &with_code(&ego_cond, &ego_code),
        schedule,
        cfg.sample_steps,
        &mut rng,
    )?;
    let ego_trajectory = decode_trajectory(&raw, cfg.disp_bound)?;

    let mut objects = Vec::with_capacity(nodes.len());
    for (((n, c), (b, code)), traj) in nodes.iter().zip(&conds).zip(boxes.iter().zip(&codes)).zip(trajs) {
        let cond = with_code(c, code);
        let mut points = Vec::with_capacity(cfg.shape_points);
        for _ in 0..cfg.shape_points {
            let raw = p_sample_loop(models.shapes, &cond, schedule, cfg.sample_steps, &mut rng)?;
            points.push([0, 1, 2, 3].map(|k| raw[k].clamp(-1.0, 1.0)));
        }
        objects.push(LayoutObject {
            node_id: n.id,
            category: n.category,
            motion_state: n.motion_state,
            bbox: *b,
            trajectory: traj,
            shape: CanonicalShape { points },
        });
    }
    Ok(LayoutSample {
        layout: Layout4D {
            ego_trajectory,
            objects,
        },
        rejections,
        penalty,
    })
}

/// Slot centers of the synthetic layout set, as `(x, y)` in meters around ego.
pub const SYNTHETIC_SLOTS: [[f64; 2]; 4] = [[16.0, 0.0], [-16.0, 0.0], [0.0, 16.0], [0.0, -16.0]];

/// Two-dimensional training set of box centers: the condition is a one-hot slot
/// index and the target is the normalized `(cx, cy)` of a box near that slot,
/// jittered by `jitter` meters.
pub fn synthetic_center_dataset(n: usize, jitter: f64, seed: u64) -> Vec<TrainExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DEFAULT_BOUNDS;
    (0..n)
        .map(|i| {
            let slot = i % SYNTHETIC_SLOTS.len();
            let z = gaussian_vec(&mut rng, 2);
            let x = SYNTHETIC_SLOTS[slot][0] + jitter * z[0];
            let y = SYNTHETIC_SLOTS[slot][1] + jitter * z[1];
            let mut cond = vec![0.0; SYNTHETIC_SLOTS.len()];
            cond[slot] = 1.0;
            TrainExample {
                x0: vec![(x - b[0]) / (b[3] - b[0]), (y - b[1]) / (b[4] - b[1])],
                cond,
            }
        })
        .collect()
}
