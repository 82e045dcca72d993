//! Scene data model: labeled instances with axis-aligned boxes.
//!
//! Scenes are ingested from a JSON document and are immutable afterwards. The
//! loader injects five virtual instances (one `room center`, four
//! `room corner`s) so programs can refer to them like any other object.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROOM_CENTER_LABEL: &str = "room center";
pub const ROOM_CORNER_LABEL: &str = "room corner";
const VIRTUAL_PREFIX: &str = "virtual:";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed scene document: {0}")]
    Malformed(String),
    #[error("empty scene")]
    Empty,
    #[error("instance `{0}` has neither bbox nor points")]
    MissingGeometry(String),
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
    #[error("instance `{id}`: {reason}")]
    InvalidInstance { id: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A point in meters, world frame, +z up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Point3) -> Point3 {
        Point3::new(self.y * other.z - self.z * other.y, self.z * other.x - self.x * other.z, self.x * other.y - self.y * other.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Point3) -> f64 {
        (self - other).norm()
    }

    pub fn min(self, other: Point3) -> Point3 {
        Point3::new(self.x.min(other.x), self.y.min(other.y), self.z.min(other.z))
    }

    pub fn max(self, other: Point3) -> Point3 {
        Point3::new(self.x.max(other.x), self.y.max(other.y), self.z.max(other.z))
    }

    pub fn midpoint(self, other: Point3) -> Point3 {
        (self + other) * 0.5
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(v: [f64; 3]) -> Self {
        Point3::new(v[0], v[1], v[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Axis-aligned bounding box, serialized as `[[min], [max]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[Point3; 2]", into = "[Point3; 2]")]
pub struct Aabb {
    pub min_corner: Point3,
    pub max_corner: Point3,
}

impl From<[Point3; 2]> for Aabb {
    fn from(v: [Point3; 2]) -> Self {
        Aabb { min_corner: v[0], max_corner: v[1] }
    }
}

impl From<Aabb> for [Point3; 2] {
    fn from(b: Aabb) -> Self {
        [b.min_corner, b.max_corner]
    }
}

impl Aabb {
    pub fn new(min_corner: Point3, max_corner: Point3) -> Self {
        Aabb { min_corner, max_corner }
    }

    pub fn from_center_size(center: Point3, size: Point3) -> Self {
        let half = size * 0.5;
        Aabb::new(center - half, center + half)
    }

    /// Component-wise envelope of a non-empty point list.
    pub fn envelope<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Aabb> {
        points.into_iter().fold(None, |acc, p| match acc {
            None => Some(Aabb::new(*p, *p)),
            Some(b) => Some(Aabb::new(b.min_corner.min(*p), b.max_corner.max(*p))),
        })
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min_corner.min(other.min_corner), self.max_corner.max(other.max_corner))
    }

    pub fn is_valid(&self) -> bool {
        self.min_corner.is_finite()
            && self.max_corner.is_finite()
            && self.min_corner.x <= self.max_corner.x
            && self.min_corner.y <= self.max_corner.y
            && self.min_corner.z <= self.max_corner.z
    }

    pub fn center(&self) -> Point3 {
        self.min_corner.midpoint(self.max_corner)
    }

    pub fn extents(&self) -> Point3 {
        self.max_corner - self.min_corner
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point3) -> bool {
        p.x >= self.min_corner.x
            && p.x <= self.max_corner.x
            && p.y >= self.min_corner.y
            && p.y <= self.max_corner.y
            && p.z >= self.min_corner.z
            && p.z <= self.max_corner.z
    }

    pub fn translated(&self, by: Point3) -> Aabb {
        Aabb::new(self.min_corner + by, self.max_corner + by)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub label: String,
    pub bbox: Aabb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Point3>>,
    #[serde(default, rename = "virtual", skip_serializing_if = "std::ops::Not::not")]
    pub is_virtual: bool,
}

impl Instance {
    pub fn new(id: impl Into<String>, label: &str, bbox: Aabb) -> Self {
        Instance { id: id.into(), label: normalize_label(label), bbox, points: None, is_virtual: false }
    }

    pub fn center(&self) -> Point3 {
        instance_center(self)
    }
}

/// Bounding-box midpoint.
pub fn instance_center(inst: &Instance) -> Point3 {
    inst.bbox.center()
}

/// Trim, lowercase and collapse internal whitespace.
pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    instances: Vec<Instance>,
    scene_center: Point3,
    index: HashMap<String, usize>,
}

impl Scene {
    /// Validates `instances` (all non-virtual) and injects the virtual room
    /// instances.
    pub fn new(id: impl Into<String>, instances: Vec<Instance>) -> Result<Scene, SceneError> {
        let mut instances = instances;
        if instances.is_empty() {
            return Err(SceneError::Empty);
        }
        let mut seen = HashSet::new();
        for inst in &mut instances {
            if inst.is_virtual {
                return Err(SceneError::InvalidInstance {
                    id: inst.id.clone(),
                    reason: "virtual instances are injected by the loader".into(),
                });
            }
            inst.label = normalize_label(&inst.label);
            if inst.label.is_empty() {
                return Err(SceneError::InvalidInstance { id: inst.id.clone(), reason: "empty label".into() });
            }
            if !inst.bbox.is_valid() {
                return Err(SceneError::InvalidInstance {
                    id: inst.id.clone(),
                    reason: "bbox must be finite with min <= max".into(),
                });
            }
            if let Some(points) = &inst.points {
                if Aabb::envelope(points.iter()) != Some(inst.bbox) {
                    return Err(SceneError::InvalidInstance {
                        id: inst.id.clone(),
                        reason: "bbox does not match the envelope of points".into(),
                    });
                }
            }
            if !seen.insert(inst.id.clone()) {
                return Err(SceneError::DuplicateId(inst.id.clone()));
            }
        }

        let envelope = instances.iter().skip(1).fold(instances[0].bbox, |acc, i| acc.union(&i.bbox));
        let scene_center = envelope.center();
        let z = envelope.min_corner.z;
        let (lo, hi) = (envelope.min_corner, envelope.max_corner);
        let mut virtuals = vec![virtual_instance("room_center", ROOM_CENTER_LABEL, scene_center)];
        for (k, (x, y)) in [(lo.x, lo.y), (hi.x, lo.y), (hi.x, hi.y), (lo.x, hi.y)].into_iter().enumerate() {
            virtuals.push(virtual_instance(&format!("room_corner_{k}"), ROOM_CORNER_LABEL, Point3::new(x, y, z)));
        }
        for v in virtuals {
            if !seen.insert(v.id.clone()) {
                return Err(SceneError::DuplicateId(v.id));
            }
            instances.push(v);
        }

        let index = instances.iter().enumerate().map(|(i, inst)| (inst.id.clone(), i)).collect();
        Ok(Scene { id: id.into(), instances, scene_center, index })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn non_virtual(&self) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(|i| !i.is_virtual)
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.index.get(id).map(|&i| &self.instances[i])
    }

    pub fn scene_center(&self) -> Point3 {
        self.scene_center
    }

    /// Distinct labels in instance order, virtual labels last.
    pub fn distinct_labels(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.non_virtual()
            .chain(self.instances.iter().filter(|i| i.is_virtual))
            .filter(|i| seen.insert(i.label.as_str()))
            .map(|i| i.label.clone())
            .collect()
    }

    pub fn to_document(&self) -> SceneDocument {
        SceneDocument {
            id: self.id.clone(),
            instances: self
                .non_virtual()
                .map(|i| InstanceDocument {
                    id: i.id.clone(),
                    label: i.label.clone(),
                    bbox: Some(i.bbox),
                    points: i.points.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("scene documents always serialize")
    }
}

fn virtual_instance(name: &str, label: &str, at: Point3) -> Instance {
    Instance {
        id: format!("{VIRTUAL_PREFIX}{name}"),
        label: label.to_string(),
        bbox: Aabb::new(at, at),
        points: None,
        is_virtual: true,
    }
}

pub fn scene_center(scene: &Scene) -> Point3 {
    scene.scene_center()
}

/// Instances whose normalized label is in `label_set`, sorted by id.
pub fn domain_of<'a, S: AsRef<str>>(scene: &'a Scene, label_set: &[S]) -> Vec<&'a Instance> {
    let wanted: HashSet<String> = label_set.iter().map(|l| normalize_label(l.as_ref())).collect();
    let mut out: Vec<&Instance> = scene.instances.iter().filter(|i| wanted.contains(&i.label)).collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub id: String,
    pub instances: Vec<InstanceDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Aabb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Point3>>,
}

impl SceneDocument {
    pub fn into_scene(self) -> Result<Scene, SceneError> {
        if self.instances.is_empty() {
            return Err(SceneError::Empty);
        }
        let mut instances = Vec::with_capacity(self.instances.len());
        for doc in self.instances {
            if doc.id.starts_with(VIRTUAL_PREFIX) {
                return Err(SceneError::InvalidInstance {
                    id: doc.id,
                    reason: format!("ids starting with `{VIRTUAL_PREFIX}` are reserved"),
                });
            }
            if let Some(points) = &doc.points {
                if points.iter().any(|p| !p.is_finite()) {
                    return Err(SceneError::InvalidInstance { id: doc.id, reason: "non-finite point".into() });
                }
            }
            let bbox = match (&doc.bbox, &doc.points) {
                (_, Some(points)) if !points.is_empty() => {
                    let env = Aabb::envelope(points.iter()).expect("non-empty");
                    if doc.bbox.is_some_and(|b| b != env) {
                        return Err(SceneError::InvalidInstance {
                            id: doc.id,
                            reason: "bbox does not match the envelope of points".into(),
                        });
                    }
                    env
                }
                (Some(b), _) => *b,
                _ => return Err(SceneError::MissingGeometry(doc.id)),
            };
            instances.push(Instance {
                id: doc.id,
                label: doc.label,
                bbox,
                points: doc.points.filter(|p| !p.is_empty()),
                is_virtual: false,
            });
        }
        Scene::new(self.id, instances)
    }
}

/// Reads a scene document from `source`.
pub fn load_scene(mut source: impl Read) -> Result<Scene, SceneError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let doc: SceneDocument = serde_json::from_str(&text).map_err(|e| SceneError::Malformed(e.to_string()))?;
    doc.into_scene()
}
