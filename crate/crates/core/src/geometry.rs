//! Shared domain types: points, oriented boxes, trajectories and rigid poses.
//!
//! Boxes are yaw-only. The box length `l` runs along the heading (local x),
//! the width `w` along local y and the height `h` along z.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn xyz(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn with_xyz(&self, p: Vector3<f64>) -> Self {
        Self::new(p.x, p.y, p.z, self.intensity)
    }

    pub fn range(&self) -> f64 {
        self.xyz().norm()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite coordinates and intensities outside `[0, 1]`.
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let cloud = Self { points };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::invalid(format!("points[{i}]"), "non-finite coordinate"));
            }
            if !(0.0..=1.0).contains(&p.intensity) {
                return Err(Error::invalid(
                    format!("points[{i}].intensity"),
                    format!("{} not in [0, 1]", p.intensity),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BoxRepr {
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
}

/// Oriented 3D box with yaw about +z. Size is `(w, l, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr", into = "BoxRepr")]
pub struct Box3D {
    center: [f64; 3],
    size: [f64; 3],
    yaw: f64,
}

impl TryFrom<BoxRepr> for Box3D {
    type Error = Error;
    fn try_from(r: BoxRepr) -> Result<Self> {
        Box3D::new(r.center, r.size, r.yaw)
    }
}

impl From<Box3D> for BoxRepr {
    fn from(b: Box3D) -> Self {
        BoxRepr {
            center: b.center,
            size: b.size,
            yaw: b.yaw,
        }
    }
}

impl Box3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64) -> Result<Self> {
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("box.center", "non-finite"));
        }
        for (name, s) in ["w", "l", "h"].iter().zip(size) {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(
                    format!("box.size.{name}"),
                    format!("{s} must be positive"),
                ));
            }
        }
        if !yaw.is_finite() {
            return Err(Error::invalid("box.yaw", "non-finite"));
        }
        Ok(Self {
            center,
            size,
            yaw: wrap_angle(yaw),
        })
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn center_vec(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    /// `(w, l, h)`
    pub fn size(&self) -> [f64; 3] {
        self.size
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn width(&self) -> f64 {
        self.size[0]
    }

    pub fn length(&self) -> f64 {
        self.size[1]
    }

    pub fn height(&self) -> f64 {
        self.size[2]
    }

    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    /// Half extents along the local (x, y, z) axes, i.e. `(l/2, w/2, h/2)`.
    pub fn half_extents(&self) -> [f64; 3] {
        [self.size[1] / 2.0, self.size[0] / 2.0, self.size[2] / 2.0]
    }

    pub fn with_center(&self, center: [f64; 3]) -> Result<Self> {
        Self::new(center, self.size, self.yaw)
    }

    pub fn with_yaw(&self, yaw: f64) -> Self {
        Self {
            yaw: wrap_angle(yaw),
            ..*self
        }
    }

    /// Maps a world point into the box frame (origin at the center, x along heading).
    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.center_vec();
        Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    pub fn to_world(&self, q: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(
            c * q.x - s * q.y + self.center[0],
            s * q.x + c * q.y + self.center[1],
            q.z + self.center[2],
        )
    }

    /// The 8 corners: bottom face counter-clockwise, then the top face in the same order.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let [hl, hw, hh] = self.half_extents();
        let local = [
            (hl, -hw, -hh),
            (hl, hw, -hh),
            (-hl, hw, -hh),
            (-hl, -hw, -hh),
            (hl, -hw, hh),
            (hl, hw, hh),
            (-hl, hw, hh),
            (-hl, -hw, hh),
        ];
        local.map(|(x, y, z)| self.to_world(&Vector3::new(x, y, z)))
    }

    /// Footprint polygon in the xy plane, counter-clockwise.
    pub fn bev_polygon(&self) -> [[f64; 2]; 4] {
        let c = self.corners();
        [0, 1, 2, 3].map(|i| [c[i].x, c[i].y])
    }

    /// Inclusive containment test.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.contains_with_margin(p, 0.0)
    }

    /// Containment in the box grown by `margin` on every face.
    pub fn contains_with_margin(&self, p: &Vector3<f64>, margin: f64) -> bool {
        let q = self.to_local(p);
        let [hl, hw, hh] = self.half_extents();
        q.x.abs() <= hl + margin && q.y.abs() <= hw + margin && q.z.abs() <= hh + margin
    }

    pub fn z_range(&self) -> (f64, f64) {
        let hh = self.size[2] / 2.0;
        (self.center[2] - hh, self.center[2] + hh)
    }

    /// Applies a rigid yaw-only pose to the box. Pitch/roll components of the
    /// pose are ignored beyond their effect on the center.
    pub fn transformed(&self, pose: &Pose) -> Self {
        let c = pose.transform_vec(&self.center_vec());
        let r = pose.rotation();
        let dyaw = r[(1, 0)].atan2(r[(0, 0)]);
        Self {
            center: [c.x, c.y, c.z],
            size: self.size,
            yaw: wrap_angle(self.yaw + dyaw),
        }
    }
}

pub fn box_corners(b: &Box3D) -> [Vector3<f64>; 8] {
    b.corners()
}

pub fn contains_point(b: &Box3D, p: &Point) -> bool {
    b.contains(&p.xyz())
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - a[1] * b[0]
        })
        .sum();
    twice.abs() / 2.0
}

/// Sutherland–Hodgman clip of `subject` against the convex counter-clockwise `clip` polygon.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            let cur_in = cross2(a, b, cur) >= 0.0;
            let prev_in = cross2(a, b, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_intersection(prev, cur, a, b));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn line_intersection(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let dp = cross2(a, b, p);
    let dq = cross2(a, b, q);
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Area of the intersection of two box footprints.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let pa = a.bev_polygon();
    let pb = b.bev_polygon();
    polygon_area(&clip_convex(&pa, &pb))
}

/// Bird's-eye-view IoU of the two footprints.
pub fn iou_bev(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection_area(a, b);
    let union = a.width() * a.length() + b.width() * b.length() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Exact oriented 3D IoU: footprint intersection times vertical overlap.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let (az0, az1) = a.z_range();
    let (bz0, bz1) = b.z_range();
    let dz = az1.min(bz1) - az0.max(bz0);
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Planar displacement sequence relative to frame 0, one entry per future frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Trajectory {
    displacements: Vec<[f64; 2]>,
}

impl TryFrom<Vec<[f64; 2]>> for Trajectory {
    type Error = Error;
    fn try_from(d: Vec<[f64; 2]>) -> Result<Self> {
        Trajectory::new(d)
    }
}

impl From<Trajectory> for Vec<[f64; 2]> {
    fn from(t: Trajectory) -> Self {
        t.displacements
    }
}

impl Trajectory {
    pub fn new(displacements: Vec<[f64; 2]>) -> Result<Self> {
        if displacements.is_empty() {
            return Err(Error::invalid("trajectory", "needs at least one step"));
        }
        if displacements.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory", "non-finite displacement"));
        }
        Ok(Self { displacements })
    }

    pub fn stationary(steps: usize) -> Self {
        Self {
            displacements: vec![[0.0, 0.0]; steps.max(1)],
        }
    }

    /// Constant-velocity straight path.
    pub fn linear(steps: usize, per_step: [f64; 2]) -> Self {
        Self {
            displacements: (1..=steps.max(1))
                .map(|k| [per_step[0] * k as f64, per_step[1] * k as f64])
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.displacements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displacements.is_empty()
    }

    pub fn displacements(&self) -> &[[f64; 2]] {
        &self.displacements
    }

    /// Displacement at frame `t`; frame 0 is the origin.
    pub fn at(&self, t: usize) -> Result<[f64; 2]> {
        match t {
            0 => Ok([0.0, 0.0]),
            t if t <= self.len() => Ok(self.displacements[t - 1]),
            t => Err(Error::Timestep { t, max: self.len() }),
        }
    }

    /// Heading at every frame `0..=T`, from the direction of each step.
    /// A zero-length step keeps the previous heading; frame 0 uses `initial`.
    pub fn headings(&self, initial: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() + 1);
        let mut prev = [0.0, 0.0];
        let mut heading = initial;
        out.push(heading);
        for d in &self.displacements {
            let (dx, dy) = (d[0] - prev[0], d[1] - prev[1]);
            if dx != 0.0 || dy != 0.0 {
                heading = dy.atan2(dx);
            }
            out.push(heading);
            prev = *d;
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRepr {
    /// Row-major.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

/// Rigid transform `p' = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const POSE_TOL: f64 = 1e-9;

impl TryFrom<PoseRepr> for Pose {
    type Error = Error;
    fn try_from(r: PoseRepr) -> Result<Self> {
        let m = r.rotation;
        Pose::new(
            Matrix3::new(
                m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
            ),
            Vector3::from(r.translation),
        )
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let r = p.rotation;
        PoseRepr {
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho <= POSE_TOL) {
            return Err(Error::invalid("pose.rotation", format!("not orthonormal ({ortho:e})")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > POSE_TOL {
            return Err(Error::invalid("pose.rotation", format!("determinant {det}")));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pose.translation", "non-finite"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_yaw(yaw: f64, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix(),
            translation,
        }
    }

    pub fn translation_only(t: Vector3<f64>) -> Self {
        Self::from_yaw(0.0, t)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Yaw extracted from the rotation's first column.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_vec(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_point(&self, p: &Point) -> Point {
        p.with_xyz(self.transform_vec(&p.xyz()))
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

pub fn transform_points(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    cloud.points.iter().map(|p| pose.transform_point(p)).collect()
}

/// One sensor sweep with the ego pose (ego → frame-0 world) it was captured at.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub cloud: PointCloud,
    pub pose: Pose,
    pub boxes: Option<Vec<Box3D>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSequence {
    pub frames: Vec<Frame>,
}

impl SceneSequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Empty("scene sequence"));
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.frames.iter().map(|f| f.pose).collect()
    }

    pub fn clouds(&self) -> Vec<&PointCloud> {
        self.frames.iter().map(|f| &f.cloud).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_cube(center: [f64; 3], yaw: f64) -> Box3D {
        Box3D::new(center, [1.0, 1.0, 1.0], yaw).unwrap()
    }

    #[test]
    fn unit_cube_corners_are_half_offsets() {
        let b = unit_cube([0.0; 3], 0.0);
        for c in b.corners() {
            for v in c.iter() {
                assert_eq!(v.abs(), 0.5);
            }
        }
    }

    #[test]
    fn quarter_turn_swaps_extents() {
        let b = Box3D::new([0.0; 3], [2.0, 4.0, 1.0], PI / 2.0).unwrap();
        let cs = b.corners();
        let max_x = cs.iter().map(|c| c.x).fold(f64::MIN, f64::max);
        let max_y = cs.iter().map(|c| c.y).fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(max_x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(max_y, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn translated_corners_offset() {
        let a = unit_cube([0.0; 3], 0.3);
        let b = unit_cube([1.0, 2.0, 3.0], 0.3);
        for (ca, cb) in a.corners().iter().zip(b.corners().iter()) {
            assert_abs_diff_eq!((cb - ca).x, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!((cb - ca).y, 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!((cb - ca).z, 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn containment_is_boundary_inclusive() {
        let b = unit_cube([0.0; 3], 0.0);
        assert!(contains_point(&b, &Point::new(0.0, 0.0, 0.0, 0.0)));
        assert!(contains_point(&b, &Point::new(0.5, 0.0, 0.0, 0.0)));
        assert!(!contains_point(&b, &Point::new(0.51, 0.0, 0.0, 0.0)));
    }

    #[test]
    fn iou_trivia() {
        let a = unit_cube([0.0; 3], 0.0);
        assert_abs_diff_eq!(iou_3d(&a, &a), 1.0, epsilon = 1e-12);
        let far = unit_cube([5.0, 0.0, 0.0], 0.0);
        assert_eq!(iou_3d(&a, &far), 0.0);
        let half = unit_cube([0.5, 0.0, 0.0], 0.0);
        assert_abs_diff_eq!(iou_3d(&a, &half), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn vertically_disjoint_boxes_do_not_overlap() {
        let a = unit_cube([0.0; 3], 0.0);
        let b = unit_cube([0.0, 0.0, 1.5], 0.0);
        assert_eq!(iou_3d(&a, &b), 0.0);
    }

    #[test]
    fn rotated_square_overlap() {
        // A unit square rotated 45° inside itself leaves an octagon of area 2(√2 − 1).
        let a = unit_cube([0.0; 3], 0.0);
        let b = unit_cube([0.0; 3], PI / 4.0);
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        assert_abs_diff_eq!(bev_intersection_area(&a, &b), inter, epsilon = 1e-12);
        assert_abs_diff_eq!(iou_3d(&a, &b), inter / (2.0 - inter), epsilon = 1e-12);
    }

    #[test]
    fn yaw_normalized_into_half_open_interval() {
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        let b = Box3D::new([0.0; 3], [1.0; 3], 7.0).unwrap();
        assert!(b.yaw() > -PI && b.yaw() <= PI);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(Box3D::new([0.0; 3], [0.0, 1.0, 1.0], 0.0).is_err());
        assert!(Box3D::new([f64::NAN, 0.0, 0.0], [1.0; 3], 0.0).is_err());
    }

    #[test]
    fn transform_examples() {
        let cloud = PointCloud::new(vec![Point::new(1.0, 0.0, 0.0, 0.5)]).unwrap();
        assert_eq!(transform_points(&cloud, &Pose::identity()), cloud);
        let shifted = transform_points(&cloud, &Pose::translation_only(Vector3::new(1.0, 0.0, 0.0)));
        assert_eq!(shifted.points[0].x, 2.0);
        let rotated = transform_points(&cloud, &Pose::from_yaw(PI / 2.0, Vector3::zeros()));
        assert_abs_diff_eq!(rotated.points[0].x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rotated.points[0].y, 1.0, epsilon = 1e-15);
        assert_eq!(rotated.points[0].intensity, 0.5);
    }

    #[test]
    fn pose_validation() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(Pose::new(m, Vector3::zeros()).is_err());
        assert!(Pose::new(Matrix3::identity() * 1.1, Vector3::zeros()).is_err());
    }

    #[test]
    fn trajectory_headings_hold_on_zero_steps() {
        let t = Trajectory::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        let h = t.headings(0.2);
        assert_eq!(h[0], 0.2);
        assert_eq!(h[1], 0.2);
        assert_abs_diff_eq!(h[2], PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h[3], PI / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn box_serde_validates() {
        let ok: Box3D = serde_json::from_str(r#"{"center":[1,2,3],"size":[1,2,3],"yaw":0.5}"#).unwrap();
        assert_eq!(ok.center(), [1.0, 2.0, 3.0]);
        let bad = serde_json::from_str::<Box3D>(r#"{"center":[1,2,3],"size":[-1,2,3],"yaw":0}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn pose_serde_round_trip() {
        let p = Pose::from_yaw(0.7, Vector3::new(1.0, -2.0, 0.5));
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Pose>(&text).unwrap(), p);
        let skew = r#"{"rotation":[[1,0,0],[0,2,0],[0,0,1]],"translation":[0,0,0]}"#;
        assert!(serde_json::from_str::<Pose>(skew).is_err());
    }
}
