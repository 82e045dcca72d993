//! Seeded procedural rooms with planted relations.
//!
//! Planted groups (a target beside or on an anchor, or a row of objects to
//! one side of an anchor) are placed first, free objects afterwards. Every
//! attempt is verified against the geometry predicates and rejected if a
//! planted relation fails or, for unique plants, if any other pair of the
//! same labels satisfies it too.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{eval_relation, viewer_frame, RelationKind, Thresholds};
use crate::scene::{normalize_label, Aabb, Instance, Point3, Scene};

const DEFAULT_SIZE: [f64; 3] = [0.6, 0.6, 0.6];
const WALL_THICKNESS: f64 = 0.1;
const SAMPLES_PER_GROUP: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    Invalid(String),
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Plant {
    /// `target` next to `anchor` with `gap` meters between the footprints.
    Beside {
        target: String,
        anchor: String,
        #[serde(default = "default_gap")]
        gap: f64,
        #[serde(default = "yes")]
        unique: bool,
    },
    /// `target` resting on top of `anchor`.
    OnTop {
        target: String,
        anchor: String,
        #[serde(default = "yes")]
        unique: bool,
    },
    /// `count` objects in a line to one side of `anchor`, each to that side
    /// of the previous one.
    Row {
        label: String,
        count: usize,
        anchor: String,
        side: Side,
        #[serde(default = "default_spacing")]
        spacing: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub label: String,
    /// Free instances, in addition to any planted ones.
    #[serde(default)]
    pub count: usize,
    #[serde(default = "default_size")]
    pub size: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// Room extents (x, y, height).
    #[serde(default = "default_room")]
    pub room: [f64; 3],
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub plants: Vec<Plant>,
    /// Minimum horizontal gap between footprints of different groups.
    #[serde(default = "default_clearance")]
    pub clearance: f64,
    /// Used to verify planted relations.
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Surround the room with four wall boxes, which puts the scene center
    /// at the room center.
    #[serde(default = "yes")]
    pub walls: bool,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_gap() -> f64 {
    0.1
}
fn default_spacing() -> f64 {
    1.0
}
fn default_size() -> [f64; 3] {
    DEFAULT_SIZE
}
fn default_room() -> [f64; 3] {
    [8.0, 8.0, 3.0]
}
fn default_clearance() -> f64 {
    0.2
}
fn default_attempts() -> usize {
    200
}
fn yes() -> bool {
    true
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            room: default_room(),
            objects: Vec::new(),
            plants: Vec::new(),
            clearance: default_clearance(),
            thresholds: Thresholds::default(),
            walls: true,
            max_attempts: default_attempts(),
        }
    }
}

/// What a plant produced: the instance playing the target role and its
/// anchors (for rows: the anchor followed by the earlier row members).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub kind: String,
    pub target: String,
    pub anchors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub scene: Scene,
    pub truth: Vec<PlantedTruth>,
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl GeneratorSpec {
    fn size_of(&self, label: &str) -> Point3 {
        let label = normalize_label(label);
        let s = self.objects.iter().find(|o| normalize_label(&o.label) == label).map_or(DEFAULT_SIZE, |o| o.size);
        Point3::new(s[0], s[1], s[2])
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if !self.room.iter().all(|&v| positive(v)) {
            return bad("room extents must be positive".into());
        }
        if !(self.clearance.is_finite() && self.clearance >= 0.0) {
            return bad("clearance must be >= 0".into());
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        self.thresholds.validate().map_err(SynthError::Invalid)?;
        for o in &self.objects {
            if normalize_label(&o.label).is_empty() {
                return bad("empty object label".into());
            }
            if !o.size.iter().all(|&v| positive(v)) {
                return bad(format!("size of `{}` must be positive", o.label));
            }
        }
        for p in &self.plants {
            let labels: Vec<&str> = match p {
                Plant::Beside { target, anchor, gap, .. } => {
                    if !(gap.is_finite() && *gap >= 0.0) {
                        return bad("beside gap must be >= 0".into());
                    }
                    vec![target, anchor]
                }
                Plant::OnTop { target, anchor, .. } => vec![target, anchor],
                Plant::Row { label, count, anchor, spacing, .. } => {
                    if *count == 0 || !positive(*spacing) {
                        return bad("row needs count >= 1 and positive spacing".into());
                    }
                    vec![label, anchor]
                }
            };
            if labels.iter().any(|l| normalize_label(l).is_empty()) {
                return bad("empty plant label".into());
            }
        }
        Ok(())
    }

    /// Labels of every box to place, planted first.
    fn all_labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for p in &self.plants {
            match p {
                Plant::Beside { target, anchor, .. } | Plant::OnTop { target, anchor, .. } => {
                    out.push(anchor.clone());
                    out.push(target.clone());
                }
                Plant::Row { label, count, anchor, .. } => {
                    out.push(anchor.clone());
                    out.extend(std::iter::repeat_n(label.clone(), *count));
                }
            }
        }
        for o in &self.objects {
            out.extend(std::iter::repeat_n(o.label.clone(), o.count));
        }
        out
    }
}

struct Ids(HashMap<String, usize>);

impl Ids {
    fn next(&mut self, label: &str) -> String {
        let label = normalize_label(label);
        let n = self.0.entry(label.clone()).or_insert(0);
        let id = format!("{}_{n}", label.replace(' ', "_"));
        *n += 1;
        id
    }
}

/// Horizontal distance between two footprints (0 when they overlap).
fn footprint_gap(a: &Aabb, b: &Aabb) -> f64 {
    let dx = (a.min_corner.x - b.max_corner.x).max(b.min_corner.x - a.max_corner.x).max(0.0);
    let dy = (a.min_corner.y - b.max_corner.y).max(b.min_corner.y - a.max_corner.y).max(0.0);
    dx.hypot(dy)
}

struct Placer<'a> {
    spec: &'a GeneratorSpec,
    rng: &'a mut ChaCha8Rng,
    placed: Vec<Aabb>,
}

impl Placer<'_> {
    fn room_center(&self) -> Point3 {
        Point3::new(self.spec.room[0] / 2.0, self.spec.room[1] / 2.0, self.spec.room[2] / 2.0)
    }

    fn inside(&self, b: &Aabb) -> bool {
        let [rx, ry, rz] = self.spec.room;
        b.min_corner.x >= 0.0 && b.min_corner.y >= 0.0 && b.max_corner.x <= rx && b.max_corner.y <= ry && b.max_corner.z <= rz
    }

    fn floor_box(&mut self, size: Point3) -> Option<Aabb> {
        let [rx, ry, _] = self.spec.room;
        if size.x > rx || size.y > ry {
            return None;
        }
        let x = self.rng.random_range(size.x / 2.0..=rx - size.x / 2.0);
        let y = self.rng.random_range(size.y / 2.0..=ry - size.y / 2.0);
        Some(Aabb::from_center_size(Point3::new(x, y, size.z / 2.0), size))
    }

    fn fits(&self, group: &[Aabb]) -> bool {
        group.iter().all(|b| self.inside(b) && self.placed.iter().all(|p| footprint_gap(b, p) >= self.spec.clearance))
    }

    /// Samples positions for one group until it fits.
    fn place(&mut self, mut sample: impl FnMut(&mut Self) -> Option<Vec<Aabb>>) -> Option<Vec<Aabb>> {
        for _ in 0..SAMPLES_PER_GROUP {
            if let Some(group) = sample(self) {
                if self.fits(&group) {
                    self.placed.extend(group.iter().copied());
                    return Some(group);
                }
            }
        }
        None
    }

    fn beside(&mut self, anchor: Point3, target: Point3, gap: f64) -> Option<Vec<Aabb>> {
        let a = self.floor_box(anchor)?;
        let c = a.center();
        let (dir, reach) = match self.rng.random_range(0..4) {
            0 => (Point3::new(1.0, 0.0, 0.0), (anchor.x + target.x) / 2.0),
            1 => (Point3::new(-1.0, 0.0, 0.0), (anchor.x + target.x) / 2.0),
            2 => (Point3::new(0.0, 1.0, 0.0), (anchor.y + target.y) / 2.0),
            _ => (Point3::new(0.0, -1.0, 0.0), (anchor.y + target.y) / 2.0),
        };
        let tc = Point3::new(c.x, c.y, target.z / 2.0) + dir * (reach + gap);
        Some(vec![a, Aabb::from_center_size(tc, target)])
    }

    fn on_top(&mut self, anchor: Point3, target: Point3) -> Option<Vec<Aabb>> {
        let a = self.floor_box(anchor)?;
        let c = a.center();
        let slack_x = ((anchor.x - target.x) / 2.0).max(0.0) * 0.5;
        let slack_y = ((anchor.y - target.y) / 2.0).max(0.0) * 0.5;
        let dx = self.rng.random_range(-slack_x..=slack_x);
        let dy = self.rng.random_range(-slack_y..=slack_y);
        let tc = Point3::new(c.x + dx, c.y + dy, a.max_corner.z + target.z / 2.0);
        Some(vec![a, Aabb::from_center_size(tc, target)])
    }

    fn row(&mut self, anchor: Point3, item: Point3, count: usize, side: Side, spacing: f64) -> Option<Vec<Aabb>> {
        let a = self.floor_box(anchor)?;
        let frame = viewer_frame(a.center(), self.room_center());
        let dir = match side {
            Side::Left => frame.right,
            Side::Right => frame.right * -1.0,
        };
        let base = Point3::new(a.center().x, a.center().y, item.z / 2.0);
        let mut group = vec![a];
        for k in 1..=count {
            group.push(Aabb::from_center_size(base + dir * (spacing * k as f64), item));
        }
        Some(group)
    }
}

fn relation_holds(kind: RelationKind, scene: &Scene, target: &str, anchor: &str, th: &Thresholds) -> bool {
    match (scene.instance(target), scene.instance(anchor)) {
        (Some(t), Some(a)) => eval_relation(kind, t, &[a], scene, th).unwrap_or(false),
        _ => false,
    }
}

/// No other (target-label, anchor-label) pair satisfies `kind`.
fn only_planted_pair(kind: RelationKind, scene: &Scene, target: &str, anchor: &str, th: &Thresholds) -> bool {
    let (Some(t), Some(a)) = (scene.instance(target), scene.instance(anchor)) else { return false };
    let targets: Vec<&Instance> = scene.non_virtual().filter(|i| i.label == t.label).collect();
    let anchors: Vec<&Instance> = scene.non_virtual().filter(|i| i.label == a.label).collect();
    targets.iter().all(|ti| {
        anchors.iter().all(|ai| {
            ti.id == ai.id || (ti.id == t.id && ai.id == a.id) || !eval_relation(kind, ti, &[*ai], scene, th).unwrap_or(false)
        })
    })
}

fn attempt(spec: &GeneratorSpec, rng: &mut ChaCha8Rng, scene_id: &str) -> Option<SynthScene> {
    let mut placer = Placer { spec, rng, placed: Vec::new() };
    let mut ids = Ids(HashMap::new());
    let mut instances = Vec::new();
    let mut truth = Vec::new();

    for plant in &spec.plants {
        match plant {
            Plant::Beside { target, anchor, gap, .. } => {
                let (sa, st) = (spec.size_of(anchor), spec.size_of(target));
                let group = placer.place(|p| p.beside(sa, st, *gap))?;
                let (aid, tid) = (ids.next(anchor), ids.next(target));
                instances.push(Instance::new(&aid, anchor, group[0]));
                instances.push(Instance::new(&tid, target, group[1]));
                truth.push(PlantedTruth { kind: "beside".into(), target: tid, anchors: vec![aid] });
            }
            Plant::OnTop { target, anchor, .. } => {
                let (sa, st) = (spec.size_of(anchor), spec.size_of(target));
                let group = placer.place(|p| p.on_top(sa, st))?;
                let (aid, tid) = (ids.next(anchor), ids.next(target));
                instances.push(Instance::new(&aid, anchor, group[0]));
                instances.push(Instance::new(&tid, target, group[1]));
                truth.push(PlantedTruth { kind: "on_top".into(), target: tid, anchors: vec![aid] });
            }
            Plant::Row { label, count, anchor, side, spacing } => {
                let (sa, si) = (spec.size_of(anchor), spec.size_of(label));
                let group = placer.place(|p| p.row(sa, si, *count, *side, *spacing))?;
                let aid = ids.next(anchor);
                instances.push(Instance::new(&aid, anchor, group[0]));
                let mut chain = vec![aid];
                for b in &group[1..] {
                    let id = ids.next(label);
                    instances.push(Instance::new(&id, label, *b));
                    chain.push(id);
                }
                let target = chain.pop().expect("count >= 1");
                truth.push(PlantedTruth { kind: "row".into(), target, anchors: chain });
            }
        }
    }
    for o in &spec.objects {
        let size = Point3::new(o.size[0], o.size[1], o.size[2]);
        for _ in 0..o.count {
            let group = placer.place(|p| p.floor_box(size).map(|b| vec![b]))?;
            instances.push(Instance::new(ids.next(&o.label), &o.label, group[0]));
        }
    }
    if spec.walls {
        let [rx, ry, rz] = spec.room;
        let t = WALL_THICKNESS;
        let walls = [
            Aabb::new(Point3::new(-t, -t, 0.0), Point3::new(rx + t, 0.0, rz)),
            Aabb::new(Point3::new(rx, -t, 0.0), Point3::new(rx + t, ry + t, rz)),
            Aabb::new(Point3::new(-t, ry, 0.0), Point3::new(rx + t, ry + t, rz)),
            Aabb::new(Point3::new(-t, -t, 0.0), Point3::new(0.0, ry + t, rz)),
        ];
        for w in walls {
            instances.push(Instance::new(ids.next("wall"), "wall", w));
        }
    }

    let scene = Scene::new(scene_id, instances).ok()?;
    let th = &spec.thresholds;
    for (plant, t) in spec.plants.iter().zip(&truth) {
        let ok = match plant {
            Plant::Beside { unique, .. } => {
                relation_holds(RelationKind::Beside, &scene, &t.target, &t.anchors[0], th)
                    && (!unique || only_planted_pair(RelationKind::Beside, &scene, &t.target, &t.anchors[0], th))
            }
            Plant::OnTop { unique, .. } => {
                relation_holds(RelationKind::On, &scene, &t.target, &t.anchors[0], th)
                    && (!unique || only_planted_pair(RelationKind::On, &scene, &t.target, &t.anchors[0], th))
            }
            Plant::Row { side, .. } => {
                let kind = match side {
                    Side::Left => RelationKind::Left,
                    Side::Right => RelationKind::Right,
                };
                let mut chain = t.anchors.clone();
                chain.push(t.target.clone());
                chain.windows(2).all(|w| relation_holds(kind, &scene, &w[1], &w[0], th))
            }
        };
        if !ok {
            return None;
        }
    }
    Some(SynthScene { scene, truth })
}

/// Generates a room from `spec`, deterministically for a given `seed`.
pub fn synth_scene(seed: u64, spec: &GeneratorSpec) -> Result<SynthScene, SynthError> {
    spec.validate()?;
    let labels = spec.all_labels();
    if labels.is_empty() && !spec.walls {
        return Err(SynthError::Invalid("nothing to place".into()));
    }
    let footprint: f64 = labels.iter().map(|l| spec.size_of(l)).map(|s| s.x * s.y).sum();
    if footprint > spec.room[0] * spec.room[1] {
        return Err(SynthError::Infeasible(format!(
            "object footprints cover {footprint:.2} m^2 but the room floor is {:.2} m^2",
            spec.room[0] * spec.room[1]
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene_id = format!("synth_{seed}");
    for _ in 0..spec.max_attempts {
        if let Some(s) = attempt(spec, &mut rng, &scene_id) {
            return Ok(s);
        }
    }
    Err(SynthError::Infeasible(format!("no valid layout after {} attempts", spec.max_attempts)))
}
