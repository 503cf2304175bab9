//! Ego-centric scene graphs built from per-frame box annotations.
//!
//! Relation labels on an edge `(subject, labels, object)` describe the object as
//! seen from the subject: with `Δ = object.center − subject.center`,
//!
//! * `front` if `Δx ≥ |Δy|`, `behind` if `−Δx ≥ |Δy|`, otherwise `left` (`Δy > 0`) or `right`;
//! * `close_by` if `‖Δ‖ < close_by_radius`;
//! * `bigger`/`smaller` if the object/subject volume ratio exceeds `size_ratio` either way;
//! * `taller`/`shorter` if the height difference exceeds `height_margin`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Box3D, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Ego,
    Car,
    Truck,
    ConstructionVehicle,
    Bus,
    Trailer,
    Motorcycle,
    Bicycle,
    Pedestrian,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Ego,
        Category::Car,
        Category::Truck,
        Category::ConstructionVehicle,
        Category::Bus,
        Category::Trailer,
        Category::Motorcycle,
        Category::Bicycle,
        Category::Pedestrian,
    ];

    /// Parses an annotation label; accepts spaces, dashes or underscores.
    /// Returns `None` for labels outside the foreground vocabulary.
    pub fn from_label(label: &str) -> Option<Self> {
        let norm: String = label
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        Some(match norm.as_str() {
            "car" => Category::Car,
            "truck" => Category::Truck,
            "construction_vehicle" => Category::ConstructionVehicle,
            "bus" => Category::Bus,
            "trailer" => Category::Trailer,
            "motorcycle" => Category::Motorcycle,
            "bicycle" => Category::Bicycle,
            "pedestrian" => Category::Pedestrian,
            _ => return None,
        })
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionState {
    Stationary,
    Straight,
    LeftTurn,
    RightTurn,
}

impl MotionState {
    pub const ALL: [MotionState; 4] = [
        MotionState::Stationary,
        MotionState::Straight,
        MotionState::LeftTurn,
        MotionState::RightTurn,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Front,
    Behind,
    Left,
    Right,
    CloseBy,
    Bigger,
    Smaller,
    Taller,
    Shorter,
}

impl Relation {
    pub const ALL: [Relation; 9] = [
        Relation::Front,
        Relation::Behind,
        Relation::Left,
        Relation::Right,
        Relation::CloseBy,
        Relation::Bigger,
        Relation::Smaller,
        Relation::Taller,
        Relation::Shorter,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

pub type RelationSet = BTreeSet<Relation>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelationConfig {
    pub close_by_radius: f64,
    pub size_ratio: f64,
    pub height_margin: f64,
    /// Ego box size `(w, l, h)`, centered at the sensor origin.
    pub ego_size: [f64; 3],
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            close_by_radius: 10.0,
            size_ratio: 1.2,
            height_margin: 0.3,
            ego_size: [1.8, 4.0, 1.5],
        }
    }
}

impl RelationConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("relations.close_by_radius", self.close_by_radius),
            ("relations.size_ratio", self.size_ratio),
            ("relations.height_margin", self.height_margin),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("{v} must be positive")));
            }
        }
        self.ego_box().map(|_| ())
    }

    pub fn ego_box(&self) -> Result<Box3D> {
        Box3D::new([0.0; 3], self.ego_size, 0.0)
    }
}

/// Thresholds for classifying a trajectory into a [`MotionState`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionConfig {
    /// Net displacement below this is stationary (meters).
    pub stationary_distance: f64,
    /// Net heading change beyond this is a turn (radians).
    pub turn_angle: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            stationary_distance: 0.5,
            turn_angle: 15f64.to_radians(),
        }
    }
}

/// Stationary if the final displacement is short; otherwise compares the
/// direction of the first and last non-zero steps. Positive change is a left turn.
pub fn classify_motion(traj: &Trajectory, cfg: &MotionConfig) -> MotionState {
    let d = traj.displacements();
    let last = d[d.len() - 1];
    if last[0].hypot(last[1]) < cfg.stationary_distance {
        return MotionState::Stationary;
    }
    let mut prev = [0.0, 0.0];
    let mut dirs = Vec::with_capacity(d.len());
    for p in d {
        let (dx, dy) = (p[0] - prev[0], p[1] - prev[1]);
        if dx != 0.0 || dy != 0.0 {
            dirs.push(dy.atan2(dx));
        }
        prev = *p;
    }
    let change = match (dirs.first(), dirs.last()) {
        (Some(a), Some(b)) => wrap_angle(b - a),
        _ => 0.0,
    };
    if change > cfg.turn_angle {
        MotionState::LeftTurn
    } else if change < -cfg.turn_angle {
        MotionState::RightTurn
    } else {
        MotionState::Straight
    }
}

/// Relation labels of `object` as seen from `subject`.
pub fn relate(subject: &Box3D, object: &Box3D, cfg: &RelationConfig) -> RelationSet {
    let s = subject.center();
    let o = object.center();
    let d = [o[0] - s[0], o[1] - s[1], o[2] - s[2]];
    let mut out = RelationSet::new();
    out.insert(if d[0] >= d[1].abs() {
        Relation::Front
    } else if -d[0] >= d[1].abs() {
        Relation::Behind
    } else if d[1] > 0.0 {
        Relation::Left
    } else {
        Relation::Right
    });
    if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() < cfg.close_by_radius {
        out.insert(Relation::CloseBy);
    }
    let (vs, vo) = (subject.volume(), object.volume());
    if vo > cfg.size_ratio * vs {
        out.insert(Relation::Bigger);
    } else if vs > cfg.size_ratio * vo {
        out.insert(Relation::Smaller);
    }
    let dh = object.height() - subject.height();
    if dh > cfg.height_margin {
        out.insert(Relation::Taller);
    } else if -dh > cfg.height_margin {
        out.insert(Relation::Shorter);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedObject {
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub category: String,
    pub num_points: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_state: Option<MotionState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameAnnotation {
    pub frame_id: String,
    pub objects: Vec<AnnotatedObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ego_motion_state: Option<MotionState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ego_trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredObject {
    /// Position in the source annotation.
    pub source_index: usize,
    pub bbox: Box3D,
    pub category: Category,
    pub num_points: u32,
    pub motion_state: MotionState,
    pub trajectory: Option<Trajectory>,
}

pub const MIN_LIDAR_POINTS: u32 = 30;
/// `[x_min, y_min, z_min, x_max, y_max, z_max]` in meters.
pub const OBJECT_VOLUME: [f64; 6] = [-80.0, -80.0, -8.0, 80.0, 80.0, 8.0];

fn within_volume(c: [f64; 3]) -> bool {
    (0..3).all(|i| c[i] >= OBJECT_VOLUME[i] && c[i] <= OBJECT_VOLUME[i + 3])
}

/// Keeps foreground objects of a known category with at least 30 points and a
/// center inside the sensing volume, in annotation order.
pub fn filter_objects(annotation: &FrameAnnotation, motion: &MotionConfig) -> Vec<FilteredObject> {
    annotation
        .objects
        .iter()
        .enumerate()
        .filter_map(|(i, obj)| {
            let category = Category::from_label(&obj.category)?;
            if obj.num_points < MIN_LIDAR_POINTS || !within_volume(obj.bbox.center()) {
                return None;
            }
            Some(FilteredObject {
                source_index: i,
                bbox: obj.bbox,
                category,
                num_points: obj.num_points,
                motion_state: resolve_state(obj.motion_state, obj.trajectory.as_ref(), motion),
                trajectory: obj.trajectory.clone(),
            })
        })
        .collect()
}

fn resolve_state(explicit: Option<MotionState>, traj: Option<&Trajectory>, motion: &MotionConfig) -> MotionState {
    explicit
        .or_else(|| traj.map(|t| classify_motion(t, motion)))
        .unwrap_or(MotionState::Stationary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: u32,
    pub category: Category,
    pub motion_state: MotionState,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Box3D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub subject: u32,
    pub object: u32,
    pub relations: RelationSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct SceneGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRepr {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl TryFrom<GraphRepr> for SceneGraph {
    type Error = Error;
    fn try_from(r: GraphRepr) -> Result<Self> {
        SceneGraph::new(r.nodes, r.edges)
    }
}

impl From<SceneGraph> for GraphRepr {
    fn from(g: SceneGraph) -> Self {
        GraphRepr {
            nodes: g.nodes,
            edges: g.edges,
        }
    }
}

pub const EGO_ID: u32 = 0;

impl SceneGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for n in &nodes {
            if !ids.insert(n.id) {
                return Err(Error::invalid("graph.nodes", format!("duplicate id {}", n.id)));
            }
            if (n.id == EGO_ID) != (n.category == Category::Ego) {
                return Err(Error::invalid(
                    "graph.nodes",
                    format!("node {} has category {:?}; only node 0 is ego", n.id, n.category),
                ));
            }
        }
        if !ids.contains(&EGO_ID) {
            return Err(Error::invalid("graph.nodes", "missing ego node 0"));
        }
        for e in &edges {
            for id in [e.subject, e.object] {
                if !ids.contains(&id) {
                    return Err(Error::UnknownNode(id));
                }
            }
            if e.subject == e.object {
                return Err(Error::invalid("graph.edges", format!("self edge on {}", e.subject)));
            }
        }
        Ok(Self { nodes, edges })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: u32) -> Result<&Node> {
        self.nodes.iter().find(|n| n.id == id).ok_or(Error::UnknownNode(id))
    }

    pub fn ego(&self) -> &Node {
        self.nodes
            .iter()
            .find(|n| n.id == EGO_ID)
            .expect("validated on construction")
    }

    /// Non-ego nodes in list order.
    pub fn object_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.id != EGO_ID)
    }

    pub fn num_objects(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn in_degree(&self, id: u32) -> usize {
        self.edges.iter().filter(|e| e.object == id).count()
    }

    pub fn out_degree(&self, id: u32) -> usize {
        self.edges.iter().filter(|e| e.subject == id).count()
    }

    pub fn edge(&self, subject: u32, object: u32) -> Option<&Edge> {
        self.edges.iter().find(|e| e.subject == subject && e.object == object)
    }

    /// Boxes keyed by node id; ego maps to its configured box.
    pub fn boxes(&self, cfg: &RelationConfig) -> Result<BTreeMap<u32, Box3D>> {
        let mut out = BTreeMap::new();
        for n in &self.nodes {
            let b = match (n.id, n.bbox) {
                (EGO_ID, _) => cfg.ego_box()?,
                (_, Some(b)) => b,
                (id, None) => return Err(Error::invalid(format!("node {id}.box"), "missing")),
            };
            out.insert(n.id, b);
        }
        Ok(out)
    }
}

/// Ego node plus filtered objects (ids `1..=M` in annotation order); an edge
/// for every ordered object pair, then one edge from every object to ego.
pub fn build_graph(
    annotation: &FrameAnnotation,
    relations: &RelationConfig,
    motion: &MotionConfig,
) -> Result<SceneGraph> {
    relations.validate()?;
    let objects = filter_objects(annotation, motion);
    let ego_box = relations.ego_box()?;
    let mut nodes = Vec::with_capacity(objects.len() + 1);
    nodes.push(Node {
        id: EGO_ID,
        category: Category::Ego,
        motion_state: resolve_state(annotation.ego_motion_state, annotation.ego_trajectory.as_ref(), motion),
        bbox: None,
    });
    for (k, obj) in objects.iter().enumerate() {
        nodes.push(Node {
            id: k as u32 + 1,
            category: obj.category,
            motion_state: obj.motion_state,
            bbox: Some(obj.bbox),
        });
    }
    let mut edges = Vec::with_capacity(objects.len() * objects.len());
    for (s, so) in objects.iter().enumerate() {
        for (o, oo) in objects.iter().enumerate() {
            if s != o {
                edges.push(Edge {
                    subject: s as u32 + 1,
                    object: o as u32 + 1,
                    relations: relate(&so.bbox, &oo.bbox, relations),
                });
            }
        }
    }
    for (s, so) in objects.iter().enumerate() {
        edges.push(Edge {
            subject: s as u32 + 1,
            object: EGO_ID,
            relations: relate(&so.bbox, &ego_box, relations),
        });
    }
    SceneGraph::new(nodes, edges)
}
