//! Spatial predicates, score functions, the viewer frame and 3D IoU.
//!
//! Every predicate works on bounding-box centers or extents only. View-dependent
//! relations use a frame placed at the anchor and oriented towards the scene
//! center: `up` is world +z, `backward` points away from the scene center and
//! `right = up × backward`. LEFT holds when the target has a positive
//! x-coordinate in that frame, RIGHT when it is negative.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Aabb, Instance, Point3, Scene};

const DEGENERATE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("{kind} expects {expected} anchor(s), got {got}")]
    Arity { kind: RelationKind, expected: &'static str, got: usize },
    #[error("{0} is not a spatial relation")]
    NotSpatial(RelationKind),
    #[error("score function `{0}` requires an anchor")]
    MissingAnchor(ScoreFunc),
    #[error("score function `{0}` does not take an anchor")]
    UnexpectedAnchor(ScoreFunc),
}

/// Distance thresholds in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub near_distance: f64,
    pub far_distance: f64,
    pub above_below_horizontal_distance: f64,
    pub between_distance: f64,
    /// When set, ON additionally requires the center distance to stay within
    /// this bound. Off by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub on_max_center_distance: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            near_distance: 2.5,
            far_distance: 2.5,
            above_below_horizontal_distance: 1.5,
            between_distance: 1.5,
            on_max_center_distance: None,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        let named = [
            ("near_distance", self.near_distance),
            ("far_distance", self.far_distance),
            ("above_below_horizontal_distance", self.above_below_horizontal_distance),
            ("between_distance", self.between_distance),
        ];
        for (name, v) in named.into_iter().chain(self.on_max_center_distance.map(|v| ("on_max_center_distance", v))) {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("threshold {name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Thresholds {
        Thresholds {
            near_distance: self.near_distance * factor,
            far_distance: self.far_distance * factor,
            above_below_horizontal_distance: self.above_below_horizontal_distance * factor,
            between_distance: self.between_distance * factor,
            on_max_center_distance: self.on_max_center_distance.map(|d| d * factor),
        }
    }
}

/// Right-handed local frame used for view-dependent relations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewerFrame {
    pub origin: Point3,
    pub right: Point3,
    pub up: Point3,
    pub backward: Point3,
    /// The anchor coincided horizontally with the scene center and the
    /// fallback orientation (backward = +x) was used.
    pub degenerate: bool,
}

impl ViewerFrame {
    /// Coordinates of `p` in this frame as (x, y, z) = (right, up, backward).
    pub fn to_local(&self, p: Point3) -> Point3 {
        let d = p - self.origin;
        Point3::new(d.dot(self.right), d.dot(self.up), d.dot(self.backward))
    }
}

pub fn viewer_frame(anchor_center: Point3, scene_center: Point3) -> ViewerFrame {
    let up = Point3::new(0.0, 0.0, 1.0);
    let away = anchor_center - scene_center;
    let horizontal = Point3::new(away.x, away.y, 0.0);
    let norm = horizontal.norm();
    let (backward, degenerate) =
        if norm < DEGENERATE_EPS { (Point3::new(1.0, 0.0, 0.0), true) } else { (horizontal * (1.0 / norm), false) };
    ViewerFrame { origin: anchor_center, right: up.cross(backward), up, backward, degenerate }
}

pub fn horizontal_distance(a: Point3, b: Point3) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RelationKind {
    Above,
    Below,
    On,
    Under,
    Far,
    Away,
    Across,
    Opposite,
    Near,
    Beside,
    Close,
    Left,
    Right,
    Front,
    Behind,
    Center,
    Middle,
    In,
    Inside,
    Between,
    Less,
    More,
    MaxOf,
    MinOf,
}

/// Predicate families; aliases within a family evaluate identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationFamily {
    Above,
    Below,
    Far,
    Near,
    Left,
    Right,
    Inside,
    Between,
    Compare,
    MinMax,
}

impl RelationKind {
    pub const ALL: [RelationKind; 24] = [
        RelationKind::Above,
        RelationKind::Below,
        RelationKind::On,
        RelationKind::Under,
        RelationKind::Far,
        RelationKind::Away,
        RelationKind::Across,
        RelationKind::Opposite,
        RelationKind::Near,
        RelationKind::Beside,
        RelationKind::Close,
        RelationKind::Left,
        RelationKind::Right,
        RelationKind::Front,
        RelationKind::Behind,
        RelationKind::Center,
        RelationKind::Middle,
        RelationKind::In,
        RelationKind::Inside,
        RelationKind::Between,
        RelationKind::Less,
        RelationKind::More,
        RelationKind::MaxOf,
        RelationKind::MinOf,
    ];

    pub fn family(self) -> RelationFamily {
        use RelationKind::*;
        match self {
            Above | On => RelationFamily::Above,
            Below | Under => RelationFamily::Below,
            Far | Away | Across | Opposite => RelationFamily::Far,
            Near | Beside | Close | Front | Behind => RelationFamily::Near,
            Left => RelationFamily::Left,
            Right => RelationFamily::Right,
            Center | Middle | In | Inside => RelationFamily::Inside,
            Between => RelationFamily::Between,
            Less | More => RelationFamily::Compare,
            MaxOf | MinOf => RelationFamily::MinMax,
        }
    }

    pub fn is_spatial(self) -> bool {
        !matches!(self.family(), RelationFamily::Compare | RelationFamily::MinMax)
    }

    pub fn is_minmax(self) -> bool {
        self.family() == RelationFamily::MinMax
    }

    pub fn is_comparison(self) -> bool {
        self.family() == RelationFamily::Compare
    }

    pub fn name(self) -> &'static str {
        use RelationKind::*;
        match self {
            Above => "ABOVE",
            Below => "BELOW",
            On => "ON",
            Under => "UNDER",
            Far => "FAR",
            Away => "AWAY",
            Across => "ACROSS",
            Opposite => "OPPOSITE",
            Near => "NEAR",
            Beside => "BESIDE",
            Close => "CLOSE",
            Left => "LEFT",
            Right => "RIGHT",
            Front => "FRONT",
            Behind => "BEHIND",
            Center => "CENTER",
            Middle => "MIDDLE",
            In => "IN",
            Inside => "INSIDE",
            Between => "BETWEEN",
            Less => "LESS",
            More => "MORE",
            MaxOf => "MAX_OF",
            MinOf => "MIN_OF",
        }
    }

    pub fn from_name(name: &str) -> Option<RelationKind> {
        RelationKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreFunc {
    #[serde(rename = "distance")]
    Distance,
    #[serde(rename = "size-x")]
    SizeX,
    #[serde(rename = "size-y")]
    SizeY,
    #[serde(rename = "size-z")]
    SizeZ,
    #[serde(rename = "size")]
    Size,
    #[serde(rename = "position-z")]
    PositionZ,
    #[serde(rename = "left")]
    Left,
    #[serde(rename = "right")]
    Right,
    #[serde(rename = "front")]
    Front,
    #[serde(rename = "distance-to-center")]
    DistanceToCenter,
    #[serde(rename = "distance-to-middle")]
    DistanceToMiddle,
}

impl ScoreFunc {
    pub const ALL: [ScoreFunc; 11] = [
        ScoreFunc::Distance,
        ScoreFunc::SizeX,
        ScoreFunc::SizeY,
        ScoreFunc::SizeZ,
        ScoreFunc::Size,
        ScoreFunc::PositionZ,
        ScoreFunc::Left,
        ScoreFunc::Right,
        ScoreFunc::Front,
        ScoreFunc::DistanceToCenter,
        ScoreFunc::DistanceToMiddle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreFunc::Distance => "distance",
            ScoreFunc::SizeX => "size-x",
            ScoreFunc::SizeY => "size-y",
            ScoreFunc::SizeZ => "size-z",
            ScoreFunc::Size => "size",
            ScoreFunc::PositionZ => "position-z",
            ScoreFunc::Left => "left",
            ScoreFunc::Right => "right",
            ScoreFunc::Front => "front",
            ScoreFunc::DistanceToCenter => "distance-to-center",
            ScoreFunc::DistanceToMiddle => "distance-to-middle",
        }
    }

    pub fn requires_anchor(self) -> bool {
        self == ScoreFunc::Distance
    }

    /// Scores measured in a viewer frame; they accept an optional anchor.
    pub fn is_view_dependent(self) -> bool {
        matches!(self, ScoreFunc::Left | ScoreFunc::Right | ScoreFunc::Front)
    }

    pub fn uses_anchor(self) -> bool {
        self.requires_anchor() || self.is_view_dependent()
    }
}

impl fmt::Display for ScoreFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreFunc {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScoreFunc::ALL.into_iter().find(|f| f.name() == s.trim()).ok_or_else(|| format!("unknown score function `{s}`"))
    }
}

/// Evaluates a spatial relation between `target` and `anchors`.
pub fn eval_relation(
    kind: RelationKind,
    target: &Instance,
    anchors: &[&Instance],
    scene: &Scene,
    th: &Thresholds,
) -> Result<bool, GeometryError> {
    let family = kind.family();
    match family {
        RelationFamily::Compare | RelationFamily::MinMax => return Err(GeometryError::NotSpatial(kind)),
        RelationFamily::Between if anchors.len() < 2 => {
            return Err(GeometryError::Arity { kind, expected: "at least 2", got: anchors.len() })
        }
        RelationFamily::Between => {}
        _ if anchors.len() != 1 => return Err(GeometryError::Arity { kind, expected: "exactly 1", got: anchors.len() }),
        _ => {}
    }

    let t = target.center();
    let a = anchors[0].center();
    Ok(match family {
        RelationFamily::Above => {
            let ok = t.z > a.z && horizontal_distance(t, a) <= th.above_below_horizontal_distance;
            match (kind, th.on_max_center_distance) {
                (RelationKind::On, Some(limit)) => ok && t.distance(a) <= limit,
                _ => ok,
            }
        }
        RelationFamily::Below => t.z < a.z && horizontal_distance(t, a) <= th.above_below_horizontal_distance,
        RelationFamily::Far => t.distance(a) > th.far_distance,
        RelationFamily::Near => t.distance(a) <= th.near_distance,
        RelationFamily::Left => viewer_frame(a, scene.scene_center()).to_local(t).x > 0.0,
        RelationFamily::Right => viewer_frame(a, scene.scene_center()).to_local(t).x < 0.0,
        RelationFamily::Inside => anchors[0].bbox.contains(t),
        RelationFamily::Between => {
            let sum = anchors.iter().fold(Point3::default(), |acc, i| acc + i.center());
            let centroid = sum * (1.0 / anchors.len() as f64);
            t.distance(centroid) <= th.between_distance
        }
        RelationFamily::Compare | RelationFamily::MinMax => unreachable!(),
    })
}

/// Scores `inst` with `func`.
///
/// `distance` requires an anchor. `left`, `right` and `front` accept an
/// optional anchor; without one the frame is placed at the scene center
/// (see [`eval_score_pivoted`] for the form the solver uses).
pub fn eval_score(func: ScoreFunc, inst: &Instance, scene: &Scene, anchor: Option<&Instance>) -> Result<f64, GeometryError> {
    eval_score_pivoted(func, inst, scene, anchor, None)
}

/// Like [`eval_score`], with an explicit frame origin for view-dependent
/// scores that have no anchor. The solver passes the centroid of the compared
/// candidates so the frame faces them from the scene center.
pub fn eval_score_pivoted(
    func: ScoreFunc,
    inst: &Instance,
    scene: &Scene,
    anchor: Option<&Instance>,
    pivot: Option<Point3>,
) -> Result<f64, GeometryError> {
    if func.requires_anchor() && anchor.is_none() {
        return Err(GeometryError::MissingAnchor(func));
    }
    if !func.uses_anchor() && anchor.is_some() {
        return Err(GeometryError::UnexpectedAnchor(func));
    }
    let c = inst.center();
    let extents = inst.bbox.extents();
    let frame = || {
        let origin = anchor.map(Instance::center).or(pivot).unwrap_or(scene.scene_center());
        viewer_frame(origin, scene.scene_center()).to_local(c)
    };
    Ok(match func {
        ScoreFunc::Distance => c.distance(anchor.expect("checked above").center()),
        ScoreFunc::SizeX => extents.x,
        ScoreFunc::SizeY => extents.y,
        ScoreFunc::SizeZ => extents.z,
        ScoreFunc::Size => extents.x.max(extents.y).max(extents.z),
        ScoreFunc::PositionZ => c.z,
        ScoreFunc::Left => frame().x,
        ScoreFunc::Right => -frame().x,
        ScoreFunc::Front => frame().z,
        ScoreFunc::DistanceToCenter | ScoreFunc::DistanceToMiddle => c.distance(scene.scene_center()),
    })
}

/// Intersection over union of two boxes; 0 whenever the union has no volume.
pub fn iou_3d(a: &Aabb, b: &Aabb) -> f64 {
    let lo = a.min_corner.max(b.min_corner);
    let hi = a.max_corner.min(b.max_corner);
    let overlap = |l: f64, h: f64| (h - l).max(0.0);
    let inter = overlap(lo.x, hi.x) * overlap(lo.y, hi.y) * overlap(lo.z, hi.z);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
