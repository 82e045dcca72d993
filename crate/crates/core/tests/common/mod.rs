//! Test-only oracles and fixtures.
//!
//! The oracle re-implements predicates, scores, enumeration, min/max and the
//! distance heuristic from their definitions with plain loops, sharing no code
//! with the library beyond the data types.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_csp::geometry::RelationFamily;
use spatial_csp::program::{Csp, CspConstraint, CspVariable, Polarity};
use spatial_csp::{Aabb, Instance, Point3, RelationKind, Scene, ScoreFunc, Thresholds};

pub type Solution = BTreeMap<String, String>;

// ---------------------------------------------------------------- geometry

fn c(i: &Instance) -> [f64; 3] {
    let (lo, hi) = (i.bbox.min_corner, i.bbox.max_corner);
    [(lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0, (lo.z + hi.z) / 2.0]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn hdist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn scene_c(scene: &Scene) -> [f64; 3] {
    let p = scene.scene_center();
    [p.x, p.y, p.z]
}

/// (right, backward) coordinates of `p` in the frame at `origin`.
fn local_xz(origin: [f64; 3], sc: [f64; 3], p: [f64; 3]) -> (f64, f64) {
    let (mut bx, mut by) = (origin[0] - sc[0], origin[1] - sc[1]);
    let n = (bx * bx + by * by).sqrt();
    if n < 1e-9 {
        (bx, by) = (1.0, 0.0);
    } else {
        (bx, by) = (bx / n, by / n);
    }
    let (dx, dy) = (p[0] - origin[0], p[1] - origin[1]);
    // right = z × backward = (-by, bx, 0)
    (dx * -by + dy * bx, dx * bx + dy * by)
}

pub fn oracle_relation(kind: RelationKind, t: &Instance, anchors: &[&Instance], scene: &Scene, th: &Thresholds) -> bool {
    let tc = c(t);
    let sc = scene_c(scene);
    let ac = c(anchors[0]);
    match kind.name() {
        "ABOVE" | "ON" => {
            let ok = tc[2] > ac[2] && hdist(tc, ac) <= th.above_below_horizontal_distance;
            if kind == RelationKind::On {
                if let Some(limit) = th.on_max_center_distance {
                    return ok && dist(tc, ac) <= limit;
                }
            }
            ok
        }
        "BELOW" | "UNDER" => tc[2] < ac[2] && hdist(tc, ac) <= th.above_below_horizontal_distance,
        "FAR" | "AWAY" | "ACROSS" | "OPPOSITE" => dist(tc, ac) > th.far_distance,
        "NEAR" | "BESIDE" | "CLOSE" | "FRONT" | "BEHIND" => dist(tc, ac) <= th.near_distance,
        "LEFT" => local_xz(ac, sc, tc).0 > 0.0,
        "RIGHT" => local_xz(ac, sc, tc).0 < 0.0,
        "CENTER" | "MIDDLE" | "IN" | "INSIDE" => {
            let b = anchors[0].bbox;
            tc[0] >= b.min_corner.x
                && tc[0] <= b.max_corner.x
                && tc[1] >= b.min_corner.y
                && tc[1] <= b.max_corner.y
                && tc[2] >= b.min_corner.z
                && tc[2] <= b.max_corner.z
        }
        "BETWEEN" => {
            let n = anchors.len() as f64;
            let mut m = [0.0; 3];
            for a in anchors {
                let p = c(a);
                for k in 0..3 {
                    m[k] += p[k] / n;
                }
            }
            dist(tc, m) <= th.between_distance
        }
        other => panic!("oracle_relation called with {other}"),
    }
}

pub fn oracle_score(func: ScoreFunc, i: &Instance, anchor: Option<&Instance>, pivot: Option<[f64; 3]>, scene: &Scene) -> f64 {
    let p = c(i);
    let e = [
        i.bbox.max_corner.x - i.bbox.min_corner.x,
        i.bbox.max_corner.y - i.bbox.min_corner.y,
        i.bbox.max_corner.z - i.bbox.min_corner.z,
    ];
    let sc = scene_c(scene);
    let origin = anchor.map(c).or(pivot).unwrap_or(sc);
    match func.name() {
        "distance" => dist(p, c(anchor.expect("distance needs an anchor"))),
        "size-x" => e[0],
        "size-y" => e[1],
        "size-z" => e[2],
        "size" => e[0].max(e[1]).max(e[2]),
        "position-z" => p[2],
        "left" => local_xz(origin, sc, p).0,
        "right" => -local_xz(origin, sc, p).0,
        "front" => local_xz(origin, sc, p).1,
        "distance-to-center" | "distance-to-middle" => dist(p, sc),
        other => panic!("unknown score {other}"),
    }
}

fn view(func: ScoreFunc) -> bool {
    matches!(func.name(), "left" | "right" | "front")
}

fn takes_anchor(func: ScoreFunc) -> bool {
    view(func) || func.name() == "distance"
}

// -------------------------------------------------------------- enumeration

fn domain<'s>(scene: &'s Scene, v: &CspVariable) -> Vec<&'s Instance> {
    let mut d: Vec<&Instance> = scene.instances().iter().filter(|i| v.label_set.contains(&i.label)).collect();
    d.sort_by(|a, b| a.id.cmp(&b.id));
    d
}

fn eval_plain(con: &CspConstraint, bind: &BTreeMap<&str, &Instance>, scene: &Scene, th: &Thresholds) -> bool {
    let t = bind[con.target.as_str()];
    match con.kind.name() {
        "LESS" | "MORE" => {
            let r = bind[con.reference.as_deref().unwrap()];
            let f = con.score_func.unwrap();
            let a = if takes_anchor(f) { con.anchors.first().map(|n| bind[n.as_str()]) } else { None };
            let pivot = if view(f) && a.is_none() {
                let (x, y) = (c(t), c(r));
                Some([(x[0] + y[0]) / 2.0, (x[1] + y[1]) / 2.0, (x[2] + y[2]) / 2.0])
            } else {
                None
            };
            let (st, sr) = (oracle_score(f, t, a, pivot, scene), oracle_score(f, r, a, pivot, scene));
            if con.kind.name() == "LESS" {
                st < sr
            } else {
                st > sr
            }
        }
        _ => {
            let anchors: Vec<&Instance> = con.anchors.iter().map(|n| bind[n.as_str()]).collect();
            oracle_relation(con.kind, t, &anchors, scene, th)
        }
    }
}

fn constraint_ok(csp: &Csp, con: &CspConstraint, sol: &BTreeMap<&str, &Instance>, scene: &Scene, th: &Thresholds) -> bool {
    let mut names: Vec<&str> = vec![con.target.as_str()];
    names.extend(con.reference.as_deref());
    names.extend(con.anchors.iter().map(String::as_str));
    let neg: Vec<&str> = {
        let mut v: Vec<&str> = names.iter().copied().filter(|n| csp.is_negative(n)).collect();
        v.dedup();
        v
    };
    if neg.is_empty() {
        return eval_plain(con, sol, scene, th);
    }
    let used: Vec<&str> = names.iter().filter(|n| !csp.is_negative(n)).map(|n| sol[n].id.as_str()).collect();
    let doms: Vec<Vec<&Instance>> = neg.iter().map(|n| domain(scene, csp.variable(n).unwrap())).collect();
    // odometer over negative tuples
    let total: usize = doms.iter().map(Vec::len).product();
    for mut k in 0..total {
        let mut bind = sol.clone();
        let mut ids: Vec<&str> = Vec::new();
        for (n, d) in neg.iter().zip(&doms) {
            let inst = d[k % d.len()];
            k /= d.len();
            ids.push(&inst.id);
            bind.insert(n, inst);
        }
        let mut uniq = ids.clone();
        uniq.sort();
        uniq.dedup();
        if uniq.len() != ids.len() || ids.iter().any(|i| used.contains(i)) {
            continue;
        }
        if eval_plain(con, &bind, scene, th) {
            return false;
        }
    }
    true
}

/// Every all-different assignment satisfying all non-min/max constraints,
/// sorted by the ids of the name-sorted variables.
pub fn brute_force(csp: &Csp, scene: &Scene, th: &Thresholds) -> Vec<Solution> {
    let mut vars: Vec<&CspVariable> = csp.variables.iter().filter(|v| v.polarity == Polarity::Normal).collect();
    vars.sort_by(|a, b| a.name.cmp(&b.name));
    let doms: Vec<Vec<&Instance>> = vars.iter().map(|v| domain(scene, v)).collect();
    let total: usize = doms.iter().map(Vec::len).product();
    let mut out = Vec::new();
    for idx in 0..total {
        let mut k = idx;
        let mut pick = vec![0usize; vars.len()];
        // last variable varies fastest
        for j in (0..vars.len()).rev() {
            pick[j] = k % doms[j].len();
            k /= doms[j].len();
        }
        let chosen: Vec<&Instance> = pick.iter().zip(&doms).map(|(&p, d)| d[p]).collect();
        let mut ids: Vec<&str> = chosen.iter().map(|i| i.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != chosen.len() {
            continue;
        }
        let bind: BTreeMap<&str, &Instance> = vars.iter().map(|v| v.name.as_str()).zip(chosen.iter().copied()).collect();
        if csp.constraints.iter().filter(|c| !c.kind.is_minmax()).all(|con| constraint_ok(csp, con, &bind, scene, th)) {
            out.push(bind.iter().map(|(k, v)| (k.to_string(), v.id.clone())).collect());
        }
    }
    out
}

/// Min/max constraints in textual order, grouping by anchor binding.
pub fn naive_minmax(mut sols: Vec<Solution>, csp: &Csp, scene: &Scene) -> Vec<Solution> {
    for con in csp.constraints.iter().filter(|c| c.kind.is_minmax()) {
        let f = con.score_func.unwrap();
        let key = |s: &Solution| con.anchors.first().map(|a| s[a].clone());
        let mut keep = vec![false; sols.len()];
        let keys: Vec<Option<String>> = sols.iter().map(key).collect();
        for g in &keys {
            let members: Vec<usize> = (0..sols.len()).filter(|&i| &keys[i] == g).collect();
            let anchor = g.as_ref().filter(|_| takes_anchor(f)).map(|id| scene.instance(id).unwrap());
            let pivot = if view(f) && anchor.is_none() {
                let mut ids: Vec<&str> = members.iter().map(|&i| sols[i][&con.target].as_str()).collect();
                let mut seen = Vec::new();
                ids.retain(|id| {
                    let fresh = !seen.contains(id);
                    seen.push(*id);
                    fresh
                });
                let mut m = [0.0; 3];
                for id in &ids {
                    let p = c(scene.instance(id).unwrap());
                    for k in 0..3 {
                        m[k] += p[k];
                    }
                }
                Some(m.map(|v| v / ids.len() as f64))
            } else {
                None
            };
            let scores: Vec<f64> = members
                .iter()
                .map(|&i| oracle_score(f, scene.instance(&sols[i][&con.target]).unwrap(), anchor, pivot, scene))
                .collect();
            let best = if con.kind.name() == "MAX_OF" {
                scores.iter().cloned().fold(f64::MIN, f64::max)
            } else {
                scores.iter().cloned().fold(f64::MAX, f64::min)
            };
            for (m, s) in members.iter().zip(scores) {
                if s == best {
                    keep[*m] = true;
                }
            }
        }
        sols = sols.into_iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s).collect();
    }
    sols
}

pub fn avg_pair_distance(sol: &Solution, scene: &Scene) -> f64 {
    let cs: Vec<[f64; 3]> = sol.values().map(|id| c(scene.instance(id).unwrap())).collect();
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..cs.len() {
        for j in 0..i {
            sum += dist(cs[i], cs[j]);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Full naive pipeline with the minimum-average-distance heuristic.
pub fn naive_pipeline(csp: &Csp, scene: &Scene, th: &Thresholds) -> Option<Solution> {
    let sols = naive_minmax(brute_force(csp, scene, th), csp, scene);
    let mut best: Option<(f64, Solution)> = None;
    for s in sols {
        let d = avg_pair_distance(&s, scene);
        if best.as_ref().is_none_or(|(b, _)| d < *b - 1e-9 * b.abs().max(1.0)) {
            best = Some((d, s));
        }
    }
    best.map(|(_, s)| s)
}

// ------------------------------------------------------- random instances

const LABELS: [&str; 3] = ["chair", "table", "lamp"];

pub struct RandomCase {
    pub scene: Scene,
    pub csp: Csp,
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// Random scene (1..=max_instances boxes) and random CSP (1..=4 normal
/// variables, at most one negative, up to 5 constraints).
pub fn random_case(seed: u64, max_instances: usize, with_minmax: bool) -> RandomCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_inst = rng.random_range(1..=max_instances);
    let mut instances = Vec::new();
    let mut counters = [0usize; 3];
    for _ in 0..n_inst {
        let li = rng.random_range(0..3);
        let id = format!("{}_{}", LABELS[li], counters[li]);
        counters[li] += 1;
        let center = Point3::new(rng.random_range(0.0..6.0), rng.random_range(0.0..6.0), rng.random_range(0.0..2.0));
        let size = Point3::new(rng.random_range(0.2..1.5), rng.random_range(0.2..1.5), rng.random_range(0.2..1.5));
        instances.push(Instance::new(id, LABELS[li], Aabb::from_center_size(center, size)));
    }
    let scene = Scene::new(format!("random_{seed}"), instances).unwrap();

    let n_normal = rng.random_range(1..=4);
    let n_neg = rng.random_range(0..=1);
    let mut variables = Vec::new();
    for k in 0..n_normal + n_neg {
        let mut labels = vec![pick(&mut rng, &LABELS).to_string()];
        if rng.random_bool(0.3) {
            let extra = pick(&mut rng, &LABELS).to_string();
            if !labels.contains(&extra) {
                labels.push(extra);
            }
        }
        let (name, polarity) =
            if k < n_normal { (format!("V{k}"), Polarity::Normal) } else { ("NEG".to_string(), Polarity::Negative) };
        variables.push(CspVariable { name, label_set: labels, polarity });
    }
    let names: Vec<String> = variables.iter().map(|v| v.name.clone()).collect();
    let normals: Vec<String> = variables.iter().filter(|v| v.polarity == Polarity::Normal).map(|v| v.name.clone()).collect();
    let is_neg = |n: &str| n == "NEG";

    let kinds: Vec<RelationKind> = RelationKind::ALL.into_iter().filter(|k| with_minmax || !k.is_minmax()).collect();
    let mut constraints = Vec::new();
    let n_con = rng.random_range(0..=5);
    for line in 0..n_con {
        let kind = *pick(&mut rng, &kinds);
        let mut pool = names.clone();
        let draw = |rng: &mut ChaCha8Rng, pool: &mut Vec<String>| -> Option<String> {
            if pool.is_empty() {
                None
            } else {
                Some(pool.remove(rng.random_range(0..pool.len())))
            }
        };
        let con = match kind.family() {
            RelationFamily::Between => {
                let (Some(t), Some(a), Some(b)) =
                    (draw(&mut rng, &mut pool), draw(&mut rng, &mut pool), draw(&mut rng, &mut pool))
                else {
                    continue;
                };
                CspConstraint { kind, target: t, anchors: vec![a, b], reference: None, score_func: None, source_line: line + 1 }
            }
            RelationFamily::Compare => {
                let (Some(t), Some(r)) = (draw(&mut rng, &mut pool), draw(&mut rng, &mut pool)) else { continue };
                let f = *pick(&mut rng, &ScoreFunc::ALL);
                let mut anchor_pool: Vec<String> = pool.iter().filter(|n| !is_neg(n)).cloned().collect();
                let anchors = if f.requires_anchor() || (takes_anchor(f) && rng.random_bool(0.5)) {
                    match draw(&mut rng, &mut anchor_pool) {
                        Some(a) => vec![a],
                        None => continue,
                    }
                } else {
                    vec![]
                };
                CspConstraint { kind, target: t, anchors, reference: Some(r), score_func: Some(f), source_line: line + 1 }
            }
            RelationFamily::MinMax => {
                let mut normal_pool = normals.clone();
                let Some(t) = draw(&mut rng, &mut normal_pool) else { continue };
                let f = *pick(&mut rng, &ScoreFunc::ALL);
                let anchors = if f.requires_anchor() || rng.random_bool(0.4) {
                    match draw(&mut rng, &mut normal_pool) {
                        Some(a) => vec![a],
                        None => continue,
                    }
                } else {
                    vec![]
                };
                CspConstraint { kind, target: t, anchors, reference: None, score_func: Some(f), source_line: line + 1 }
            }
            _ => {
                let (Some(t), Some(a)) = (draw(&mut rng, &mut pool), draw(&mut rng, &mut pool)) else { continue };
                CspConstraint { kind, target: t, anchors: vec![a], reference: None, score_func: None, source_line: line + 1 }
            }
        };
        let has_normal = std::iter::once(&con.target).chain(&con.reference).chain(&con.anchors).any(|n| !is_neg(n));
        if has_normal {
            constraints.push(con);
        }
    }
    let csp = Csp { variables, constraints, target: "V0".into() };
    csp.validate().expect("generated CSP is well-formed");
    RandomCase { scene, csp }
}

// ----------------------------------------------------------------- fixtures

pub fn cuboid(id: &str, label: &str, center: [f64; 3], size: [f64; 3]) -> Instance {
    Instance::new(
        id,
        label,
        Aabb::from_center_size(Point3::new(center[0], center[1], center[2]), Point3::new(size[0], size[1], size[2])),
    )
}

/// Four thin walls around a square room of half-width `half` centered on the
/// origin, so the scene center sits at (0, 0).
pub fn walls(half: f64, height: f64) -> Vec<Instance> {
    let t = 0.1;
    let long = 2.0 * half + 2.0 * t;
    vec![
        cuboid("wall_0", "wall", [0.0, -half - t / 2.0, height / 2.0], [long, t, height]),
        cuboid("wall_1", "wall", [half + t / 2.0, 0.0, height / 2.0], [t, long, height]),
        cuboid("wall_2", "wall", [0.0, half + t / 2.0, height / 2.0], [long, t, height]),
        cuboid("wall_3", "wall", [-half - t / 2.0, 0.0, height / 2.0], [t, long, height]),
    ]
}

/// A bed, the desk beside it and a second desk across the room.
pub fn desk_bed_scene() -> Scene {
    let mut v = walls(5.0, 3.0);
    v.extend([
        cuboid("bed_0", "bed", [-2.0, 2.0, 0.3], [2.0, 1.6, 0.6]),
        cuboid("desk_0", "desk", [-0.4, 2.0, 0.4], [1.0, 0.6, 0.8]),
        cuboid("desk_1", "desk", [3.5, -3.0, 0.4], [1.0, 0.6, 0.8]),
    ]);
    Scene::new("desk_bed", v).unwrap()
}

pub const DESK_BED_PROGRAM: &str = "\
DESK = DEF_VAR(labels=[\"desk\"])
BED = DEF_VAR(labels=[\"bed\"])
BESIDE(target=DESK, anchor=BED)
SET_TARGET(DESK)
";

/// The biggest cup stands on a shelf; of the two cups on the table, cup_2 is
/// the larger.
pub fn cups_scene() -> Scene {
    let mut v = walls(5.0, 3.0);
    v.extend([
        cuboid("shelf_0", "shelf", [-3.0, 3.0, 0.9], [1.0, 0.4, 1.8]),
        cuboid("table_0", "table", [2.0, 0.0, 0.375], [1.2, 0.8, 0.75]),
        cuboid("cup_0", "cup", [-3.0, 3.0, 1.95], [0.16, 0.16, 0.3]),
        cuboid("cup_1", "cup", [1.8, 0.1, 0.8], [0.08, 0.08, 0.1]),
        cuboid("cup_2", "cup", [2.3, -0.1, 0.825], [0.1, 0.1, 0.15]),
    ]);
    Scene::new("cups", v).unwrap()
}

pub const CUPS_PROGRAM: &str = "\
CUP = DEF_VAR(labels=[\"cup\"])
TABLE = DEF_VAR(labels=[\"table\"])
ON(target=CUP, anchor=TABLE)
MAX_OF(target=CUP, score_func=\"size\")
SET_TARGET(CUP)
";

/// Three chairs in a row to the left of a table, viewed from the room center.
pub fn chair_row_scene() -> Scene {
    let mut v = walls(5.0, 3.0);
    v.extend([
        cuboid("table_0", "table", [0.0, 3.0, 0.375], [1.2, 0.8, 0.75]),
        cuboid("chair_0", "chair", [-1.2, 3.0, 0.45], [0.5, 0.5, 0.9]),
        cuboid("chair_1", "chair", [-2.0, 3.0, 0.45], [0.5, 0.5, 0.9]),
        cuboid("chair_2", "chair", [-2.8, 3.0, 0.45], [0.5, 0.5, 0.9]),
    ]);
    Scene::new("chair_row", v).unwrap()
}

pub const CHAIR_ROW_PROGRAM: &str = "\
CHAIR_0 = DEF_VAR(labels=[\"chair\"])
CHAIR_1 = DEF_VAR(labels=[\"chair\"])
CHAIR_2 = DEF_VAR(labels=[\"chair\"])
TABLE = DEF_VAR(labels=[\"table\"])
LEFT(target=CHAIR_0, anchor=TABLE)
LEFT(target=CHAIR_1, anchor=CHAIR_0)
LEFT(target=CHAIR_2, anchor=CHAIR_1)
SET_TARGET(CHAIR_2)
";

/// One trash can stands beside the refrigerator, the other by the table.
pub fn trash_cans_scene() -> Scene {
    let mut v = walls(5.0, 3.0);
    v.extend([
        cuboid("refrigerator_0", "refrigerator", [-4.0, 4.0, 0.9], [0.8, 0.8, 1.8]),
        cuboid("trash_can_0", "trash can", [-3.2, 4.2, 0.3], [0.4, 0.4, 0.6]),
        cuboid("table_0", "table", [2.0, -1.0, 0.375], [1.2, 0.8, 0.75]),
        cuboid("trash_can_1", "trash can", [2.9, -1.2, 0.3], [0.4, 0.4, 0.6]),
    ]);
    Scene::new("trash_cans", v).unwrap()
}

pub const TRASH_CANS_PROGRAM: &str = "\
# the trash can that is not beside the refrigerator
TRASH_CAN = DEFINE_VARIABLE(labels=[\"trash can\"])
REFRIGERATOR_NEG = DEFINE_NEGATIVE_VARIABLE(labels=[\"refrigerator\"])
CONSTRAINT_BESIDE(target=TRASH_CAN, anchor=REFRIGERATOR_NEG)
SET_TARGET(TRASH_CAN)
";

pub const ABLATION_PROGRAM: &str = "\
CHAIR = DEF_VAR(labels=[\"chair\"])
TABLE = DEF_VAR(labels=[\"table\"])
LAMP = DEF_VAR(labels=[\"lamp\"])
ON(target=LAMP, anchor=TABLE)
NEAR(target=CHAIR, anchor=TABLE)
SET_TARGET(CHAIR)
";

/// Scene `k` of the global-vs-local set and the id of the chair at the table
/// carrying the lamp. Even scenes are traps: chair_0 stands at a lamp-less
/// table, so a greedy pass keeps it and picks it first.
pub fn ablation_scene(k: usize) -> (Scene, &'static str) {
    let off = k as f64 * 0.05;
    let mut v = walls(6.0, 3.0);
    if k.is_multiple_of(2) {
        v.extend([
            cuboid("table_0", "table", [-3.0 + off, 0.0, 0.375], [1.2, 0.8, 0.75]),
            cuboid("chair_0", "chair", [-3.0 + off, 1.0, 0.45], [0.5, 0.5, 0.9]),
            cuboid("table_1", "table", [3.0, off, 0.375], [1.2, 0.8, 0.75]),
            cuboid("lamp_0", "lamp", [3.1, off, 0.95], [0.3, 0.3, 0.4]),
            cuboid("chair_1", "chair", [3.0, 1.0 + off, 0.45], [0.5, 0.5, 0.9]),
        ]);
        (Scene::new(format!("ablation_{k}"), v).unwrap(), "chair_1")
    } else {
        v.extend([
            cuboid("table_0", "table", [-2.0 + off, 1.0, 0.375], [1.2, 0.8, 0.75]),
            cuboid("lamp_0", "lamp", [-2.0 + off, 1.1, 0.95], [0.3, 0.3, 0.4]),
            cuboid("chair_0", "chair", [-2.0 + off, 2.0, 0.45], [0.5, 0.5, 0.9]),
            cuboid("chair_1", "chair", [4.0, -4.0 + off, 0.45], [0.5, 0.5, 0.9]),
        ]);
        (Scene::new(format!("ablation_{k}"), v).unwrap(), "chair_0")
    }
}

pub const HEURISTIC_PROGRAM: &str = "\
CHAIR = DEF_VAR(labels=[\"chair\"])
TABLE = DEF_VAR(labels=[\"table\"])
NEAR(target=CHAIR, anchor=TABLE)
SET_TARGET(CHAIR)
";

/// Generator spec for the heuristic suite: one chair planted right beside a
/// table, two free chairs and two free tables kept at least a meter from
/// everything. With a generous near threshold every chair-table pair is a
/// solution, and the planted one is the tightest cluster.
pub fn heuristic_spec() -> spatial_csp::harness::GeneratorSpec {
    use spatial_csp::harness::{GeneratorSpec, ObjectSpec, Plant};
    GeneratorSpec {
        room: [8.0, 8.0, 3.0],
        objects: vec![
            ObjectSpec { label: "chair".into(), count: 2, size: [0.5, 0.5, 0.9] },
            ObjectSpec { label: "table".into(), count: 2, size: [1.2, 0.8, 0.75] },
        ],
        plants: vec![Plant::Beside { target: "chair".into(), anchor: "table".into(), gap: 0.1, unique: false }],
        clearance: 1.0,
        ..Default::default()
    }
}

pub fn solution(pairs: &[(&str, &str)]) -> Solution {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Renders a CSP back to program text with one statement per line.
pub fn csp_to_program(csp: &Csp) -> String {
    let mut out = String::new();
    for v in &csp.variables {
        let f = if v.polarity == Polarity::Normal { "DEFINE_VARIABLE" } else { "DEFINE_NEGATIVE_VARIABLE" };
        let labels: Vec<String> = v.label_set.iter().map(|l| format!("\"{l}\"")).collect();
        out.push_str(&format!("{} = {f}(labels=[{}])\n", v.name, labels.join(", ")));
    }
    for con in &csp.constraints {
        let mut args = vec![format!("target={}", con.target)];
        if let Some(r) = &con.reference {
            args.push(format!("reference={r}"));
        }
        if let Some(f) = con.score_func {
            args.push(format!("score_func=\"{}\"", f.name()));
        }
        if con.kind == RelationKind::Between {
            args.push(format!("anchors={{{}}}", con.anchors.join(", ")));
        } else if let Some(a) = con.anchors.first() {
            args.push(format!("anchor={a}"));
        }
        out.push_str(&format!("CONSTRAINT_{}({})\n", con.kind.name(), args.join(", ")));
    }
    out.push_str(&format!("SET_TARGET({})\n", csp.target));
    out
}

// --------------------------------------------------------- geometry checks

fn random_box(rng: &mut ChaCha8Rng, span: f64) -> Aabb {
    let c = Point3::new(rng.random_range(-span..span), rng.random_range(-span..span), rng.random_range(0.0..span));
    let s = Point3::new(rng.random_range(0.1..3.0), rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
    Aabb::from_center_size(c, s)
}

/// Largest deviation between `iou_3d` and a Monte-Carlo estimate over
/// `pairs` overlapping box pairs with `samples` draws each. Points are drawn
/// in the smaller box, which estimates the intersection volume directly.
pub fn monte_carlo_iou_error(pairs: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < pairs {
        let a = random_box(&mut rng, 1.5);
        let b = random_box(&mut rng, 1.5);
        let (small, other) = if a.volume() <= b.volume() { (a, b) } else { (b, a) };
        let mut hits = 0usize;
        for _ in 0..samples {
            let p = Point3::new(
                rng.random_range(small.min_corner.x..small.max_corner.x),
                rng.random_range(small.min_corner.y..small.max_corner.y),
                rng.random_range(small.min_corner.z..small.max_corner.z),
            );
            hits += usize::from(other.contains(p));
        }
        let inter = small.volume() * hits as f64 / samples as f64;
        let estimate = inter / (a.volume() + b.volume() - inter);
        worst = worst.max((spatial_csp::iou_3d(&a, &b) - estimate).abs());
        done += 1;
    }
    worst
}

fn pinned_scene(extra: Vec<Instance>) -> Scene {
    let mut v = vec![
        cuboid("pin_lo", "pin", [-100.0, -100.0, 0.0], [1.0, 1.0, 1.0]),
        cuboid("pin_hi", "pin", [100.0, 100.0, 0.0], [1.0, 1.0, 1.0]),
    ];
    v.extend(extra);
    Scene::new("pinned", v).unwrap()
}

/// Configurations (out of `n`) where two aliases of one family disagree.
pub fn alias_mismatches(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let th = Thresholds::default();
    let mut bad = 0;
    for _ in 0..n {
        let boxes: Vec<Instance> = (0..3).map(|k| Instance::new(format!("o_{k}"), "thing", random_box(&mut rng, 4.0))).collect();
        let scene = pinned_scene(boxes);
        let t = scene.instance("o_0").unwrap();
        let a = [scene.instance("o_1").unwrap(), scene.instance("o_2").unwrap()];
        let mut first: BTreeMap<String, bool> = BTreeMap::new();
        for kind in RelationKind::ALL.into_iter().filter(|k| k.is_spatial()) {
            let anchors: &[&Instance] = if kind == RelationKind::Between { &a } else { &a[..1] };
            let got = spatial_csp::geometry::eval_relation(kind, t, anchors, &scene, &th).unwrap();
            let fam = format!("{:?}", kind.family());
            if *first.entry(fam).or_insert(got) != got {
                bad += 1;
            }
        }
    }
    bad
}

/// Configurations (out of `n`) where mirroring the target across the vertical
/// plane through the anchor and the scene center fails to swap LEFT with
/// RIGHT or to negate the left score.
pub fn mirror_mismatches(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let th = Thresholds::default();
    let mut bad = 0;
    let mut checked = 0;
    while checked < n {
        let tb = random_box(&mut rng, 8.0);
        let ab = random_box(&mut rng, 8.0);
        let (a, t) = (ab.center(), tb.center());
        let (bx, by) = (a.x, a.y); // the pinned scene is centered on the origin horizontally
        let norm = (bx * bx + by * by).sqrt();
        if norm < 1e-3 {
            continue;
        }
        let r = Point3::new(-by / norm, bx / norm, 0.0);
        let side = (t - a).dot(r);
        if side.abs() < 1e-6 {
            continue;
        }
        let mirrored = tb.translated(r * (-2.0 * side));
        let scene = pinned_scene(vec![
            Instance::new("anchor", "thing", ab),
            Instance::new("t", "thing", tb),
            Instance::new("m", "thing", mirrored),
        ]);
        let get = |id: &str| scene.instance(id).unwrap();
        let rel = |k, id| spatial_csp::geometry::eval_relation(k, get(id), &[get("anchor")], &scene, &th).unwrap();
        let score = |f, id| spatial_csp::geometry::eval_score(f, get(id), &scene, Some(get("anchor"))).unwrap();
        let ok = rel(RelationKind::Left, "t") == rel(RelationKind::Right, "m")
            && rel(RelationKind::Right, "t") == rel(RelationKind::Left, "m")
            && rel(RelationKind::Left, "t") != rel(RelationKind::Right, "t")
            && (score(ScoreFunc::Left, "t") + score(ScoreFunc::Left, "m")).abs() < 1e-9
            && (score(ScoreFunc::Left, "t") + score(ScoreFunc::Right, "t")).abs() < 1e-12
            && (score(ScoreFunc::Front, "t") - score(ScoreFunc::Front, "m")).abs() < 1e-9;
        bad += usize::from(!ok);
        checked += 1;
    }
    bad
}

// ------------------------------------------------------ fixture scenarios

use spatial_csp::harness::{evaluate, EvalMode, EvalOptions, Evaluation, QueryRecord, SceneStore};
use spatial_csp::program::compile;
use spatial_csp::solver::{apply_minmax, check_solution, enumerate_valid, DEFAULT_MAX_SOLUTIONS};
use spatial_csp::{solve, Engine, GroundingResult, Heuristic, SolveStatus, SolverConfig};

pub fn ground_text(program: &str, scene: &Scene, cfg: &SolverConfig) -> GroundingResult {
    let lowered = compile(program, true).unwrap_or_else(|e| panic!("fixture program does not compile: {e:?}"));
    spatial_csp::solver::ground(&lowered.csp, scene, cfg)
}

fn expect(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn expect_target(r: &GroundingResult, id: &str, what: &str) -> Result<(), String> {
    expect(
        r.status == SolveStatus::Solved && r.target_instance.as_deref() == Some(id),
        format!("{what}: expected {id}, got {:?} ({:?})", r.target_instance, r.status),
    )
}

pub fn check_desk_bed() -> Result<String, String> {
    let r = ground_text(DESK_BED_PROGRAM, &desk_bed_scene(), &SolverConfig::default());
    expect_target(&r, "desk_0", "desk beside the bed")?;
    expect(r.anchor_assignment == solution(&[("BED", "bed_0")]), format!("anchors {:?}", r.anchor_assignment))?;
    Ok("desk_0 beside bed_0".into())
}

pub fn check_cups() -> Result<String, String> {
    let scene = cups_scene();
    let r = ground_text(CUPS_PROGRAM, &scene, &SolverConfig::default());
    expect_target(&r, "cup_2", "largest cup on the table")?;

    // Applying the superlative before the spatial constraint picks the
    // largest cup overall, which is not on the table.
    let csp = compile(CUPS_PROGRAM, true).unwrap().csp;
    let mut minmax_only = csp.clone();
    minmax_only.constraints.retain(|c| c.kind.is_minmax());
    let th = Thresholds::default();
    let all = enumerate_valid(&minmax_only, &scene, &th, DEFAULT_MAX_SOLUTIONS).unwrap().solutions;
    let survivors = apply_minmax(all, &minmax_only, &scene).unwrap();
    let early: Vec<&str> = {
        let mut v: Vec<&str> = survivors.iter().map(|s| s["CUP"].as_str()).collect();
        v.dedup();
        v
    };
    expect(early == ["cup_0"], format!("superlative-first keeps {early:?}"))?;
    let on = csp.constraints.iter().find(|c| c.kind == RelationKind::On).unwrap();
    let ok = check_solution(&solution(&[("CUP", "cup_0"), ("TABLE", "table_0")]), on, &scene, &th).unwrap();
    expect(!ok, "cup_0 should not be on the table")?;
    Ok("cup_2 (superlative-first variant: cup_0)".into())
}

pub fn check_chair_row() -> Result<String, String> {
    let r = ground_text(CHAIR_ROW_PROGRAM, &chair_row_scene(), &SolverConfig::default());
    expect_target(&r, "chair_2", "third chair left of the table")?;
    let want = solution(&[("CHAIR_0", "chair_0"), ("CHAIR_1", "chair_1"), ("TABLE", "table_0")]);
    expect(r.anchor_assignment == want, format!("anchors {:?}", r.anchor_assignment))?;
    expect(r.solution_count == 1, format!("{} solutions", r.solution_count))?;
    Ok("chair_2 via chair_0, chair_1, table_0".into())
}

pub fn check_trash_cans() -> Result<String, String> {
    let scene = trash_cans_scene();
    let r = ground_text(TRASH_CANS_PROGRAM, &scene, &SolverConfig::default());
    expect_target(&r, "trash_can_1", "trash can not beside the refrigerator")?;
    let positive = TRASH_CANS_PROGRAM.replace("DEFINE_NEGATIVE_VARIABLE", "DEFINE_VARIABLE");
    let p = ground_text(&positive, &scene, &SolverConfig::default());
    expect_target(&p, "trash_can_0", "trash can beside the refrigerator")?;
    Ok("negated: trash_can_1, plain: trash_can_0".into())
}

pub const ABLATION_RECORDS: usize = 20;

pub fn ablation_store_and_records() -> (SceneStore, Vec<QueryRecord>) {
    let mut scenes = Vec::new();
    let mut records = Vec::new();
    for k in 0..ABLATION_RECORDS {
        let (scene, gt) = ablation_scene(k);
        records.push(QueryRecord {
            scene_id: scene.id.clone(),
            query: "the chair near the table with a lamp on it".into(),
            gt_bbox: scene.instance(gt).map(|i| i.bbox),
            gt_instance_id: Some(gt.into()),
            gt_label: "chair".into(),
            program: Some(ABLATION_PROGRAM.into()),
            subset_tag: None,
        });
        scenes.push(scene);
    }
    (SceneStore::from_scenes(scenes), records)
}

pub fn run_ablation(engine: Engine) -> Evaluation {
    let (store, records) = ablation_store_and_records();
    let cfg = SolverConfig { engine, ..Default::default() };
    let opts = EvalOptions { mode: EvalMode::Selection, ..Default::default() };
    evaluate(&records, &store, &cfg, &opts).unwrap()
}

/// (global, local) selection accuracy on the global-vs-local fixture set.
pub fn check_ablation() -> Result<String, String> {
    let g = run_ablation(Engine::Global).report.selection_accuracy.unwrap();
    let l = run_ablation(Engine::Local).report.selection_accuracy.unwrap();
    expect(g > l, format!("global {g:.2} is not above local {l:.2}"))?;
    expect(g == 1.0, format!("global {g:.2} below 1.0"))?;
    Ok(format!("global {g:.2} > local {l:.2} over {ABLATION_RECORDS} records"))
}

pub const HEURISTIC_SCENES: u64 = 50;

/// Fraction of synthetic scenes where the chosen full assignment is the
/// planted one, for each heuristic.
pub fn heuristic_match_rates() -> [(Heuristic, f64); 3] {
    let spec = heuristic_spec();
    let csp = compile(HEURISTIC_PROGRAM, true).unwrap().csp;
    let heuristics = [Heuristic::MinAvgDistance, Heuristic::Random { seed: 1 }, Heuristic::MaxAvgDistance];
    let mut hits = [0usize; 3];
    for seed in 0..HEURISTIC_SCENES {
        let synth = spatial_csp::harness::synth_scene(seed, &spec).unwrap();
        let truth = &synth.truth[0];
        let planted = solution(&[("CHAIR", &truth.target), ("TABLE", &truth.anchors[0])]);
        for (h, hit) in heuristics.iter().zip(hits.iter_mut()) {
            let cfg = SolverConfig {
                heuristic: match h {
                    Heuristic::Random { .. } => Heuristic::Random { seed },
                    other => *other,
                },
                thresholds: Thresholds { near_distance: 100.0, ..Thresholds::default() },
                ..Default::default()
            };
            let r = solve(&csp, &synth.scene, &cfg);
            let mut full = r.anchor_assignment.clone();
            if let Some(t) = r.target_instance {
                full.insert("CHAIR".into(), t);
            }
            *hit += usize::from(full == planted);
        }
    }
    let rate = |k: usize| hits[k] as f64 / HEURISTIC_SCENES as f64;
    [(heuristics[0], rate(0)), (heuristics[1], rate(1)), (heuristics[2], rate(2))]
}

pub fn check_heuristics() -> Result<String, String> {
    let [(_, min), (_, random), (_, max)] = heuristic_match_rates();
    expect(min == 1.0 && random < 1.0 && max == 0.0, format!("MIN {min:.2}, RANDOM {random:.2}, MAX {max:.2}"))?;
    Ok(format!("MIN {min:.2}, RANDOM {random:.2}, MAX {max:.2}"))
}
