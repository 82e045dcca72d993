//! Min/max constraints, applied after enumeration.

use crate::geometry::{eval_score_pivoted, RelationKind, ScoreFunc};
use crate::program::{Csp, CspConstraint};
use crate::scene::{Instance, Point3, Scene};

use super::{Assignment, SolverError};

fn instance<'s>(scene: &'s Scene, sol: &Assignment, var: &str) -> Result<&'s Instance, SolverError> {
    let id = sol.get(var).ok_or_else(|| SolverError::Unassigned(var.to_string()))?;
    scene.instance(id).ok_or_else(|| SolverError::UnknownInstance(id.clone()))
}

/// Centroid of the distinct instances in `insts`.
pub(crate) fn centroid(insts: &[&Instance]) -> Point3 {
    let mut seen: Vec<&str> = Vec::new();
    let mut sum = Point3::default();
    for i in insts {
        if !seen.contains(&i.id.as_str()) {
            seen.push(&i.id);
            sum = sum + i.center();
        }
    }
    sum * (1.0 / seen.len().max(1) as f64)
}

/// Scores every target in a group that shares one anchor binding.
pub(crate) fn group_scores(
    func: ScoreFunc,
    targets: &[&Instance],
    anchor: Option<&Instance>,
    scene: &Scene,
) -> Result<Vec<f64>, SolverError> {
    let anchor = anchor.filter(|_| func.uses_anchor());
    let pivot = (func.is_view_dependent() && anchor.is_none()).then(|| centroid(targets));
    targets.iter().map(|t| Ok(eval_score_pivoted(func, t, scene, anchor, pivot)?)).collect()
}

/// Indices of the scores attaining the extreme; ties are all kept.
pub(crate) fn extreme_indices(kind: RelationKind, scores: &[f64]) -> Vec<usize> {
    let best = match kind {
        RelationKind::MaxOf => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        _ => scores.iter().copied().fold(f64::INFINITY, f64::min),
    };
    (0..scores.len()).filter(|&i| scores[i] == best).collect()
}

fn apply_one(solutions: Vec<Assignment>, con: &CspConstraint, scene: &Scene) -> Result<Vec<Assignment>, SolverError> {
    let func = con.score_func.expect("min/max constraints carry a score function");
    let anchor_var = con.anchors.first();

    // Groups keyed by the anchor binding, in order of first appearance.
    let mut groups: Vec<(Option<&str>, Vec<usize>)> = Vec::new();
    for (i, sol) in solutions.iter().enumerate() {
        let key = match anchor_var {
            Some(a) => Some(sol.get(a).ok_or_else(|| SolverError::Unassigned(a.clone()))?.as_str()),
            None => None,
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(i),
            None => groups.push((key, vec![i])),
        }
    }

    let mut keep = vec![false; solutions.len()];
    for (key, members) in &groups {
        let anchor = key.map(|id| scene.instance(id).ok_or_else(|| SolverError::UnknownInstance(id.to_string()))).transpose()?;
        let targets = members.iter().map(|&i| instance(scene, &solutions[i], &con.target)).collect::<Result<Vec<_>, _>>()?;
        let scores = group_scores(func, &targets, anchor, scene)?;
        for j in extreme_indices(con.kind, &scores) {
            keep[members[j]] = true;
        }
    }
    Ok(solutions.into_iter().zip(keep).filter_map(|(s, k)| k.then_some(s)).collect())
}

/// Applies every MAX_OF/MIN_OF constraint in textual order, each one filtering
/// the output of the previous one.
///
/// Solutions are grouped by the instance bound to the constraint's anchor
/// (one group when there is none); within a group only solutions whose target
/// attains the extreme score survive. Order is preserved.
pub fn apply_minmax(solutions: Vec<Assignment>, csp: &Csp, scene: &Scene) -> Result<Vec<Assignment>, SolverError> {
    csp.constraints.iter().filter(|c| c.kind.is_minmax()).try_fold(solutions, |sols, con| apply_one(sols, con, scene))
}
