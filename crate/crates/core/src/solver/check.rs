//! Constraint evaluation shared by both engines.

use std::collections::HashMap;

use crate::geometry::{eval_relation, eval_score_pivoted, RelationKind, Thresholds};
use crate::program::{Csp, CspConstraint};
use crate::scene::{Instance, Scene};

use super::{Assignment, SolverError};

/// Looks up the instance currently bound to a variable.
pub(crate) type Binding<'a, 's> = &'a dyn Fn(&str) -> Option<&'s Instance>;

/// Evaluates a spatial or comparison constraint under `get`.
pub(crate) fn eval_constraint<'s>(
    con: &CspConstraint,
    get: Binding<'_, 's>,
    scene: &Scene,
    th: &Thresholds,
) -> Result<bool, SolverError> {
    let fetch = |name: &str| get(name).ok_or_else(|| SolverError::Unassigned(name.to_string()));
    let target = fetch(&con.target)?;

    if con.kind.is_minmax() {
        return Err(SolverError::NotCheckable(con.kind));
    }
    if con.kind.is_comparison() {
        let reference = fetch(con.reference.as_deref().ok_or(SolverError::UnknownVariable("reference".into()))?)?;
        let func = con.score_func.expect("comparison constraints carry a score function");
        let anchor = match con.anchors.first() {
            Some(a) if func.uses_anchor() => Some(fetch(a)?),
            _ => None,
        };
        // Anchor-free view scores look at the compared pair from the scene center.
        let pivot = (func.is_view_dependent() && anchor.is_none()).then(|| target.center().midpoint(reference.center()));
        let t = eval_score_pivoted(func, target, scene, anchor, pivot)?;
        let r = eval_score_pivoted(func, reference, scene, anchor, pivot)?;
        return Ok(match con.kind {
            RelationKind::Less => t < r,
            _ => t > r,
        });
    }

    let anchors = con.anchors.iter().map(|a| fetch(a)).collect::<Result<Vec<_>, _>>()?;
    Ok(eval_relation(con.kind, target, &anchors, scene, th)?)
}

/// Evaluates `con` with the negative-variable rule.
///
/// Without negative variables this is [`eval_constraint`]. Otherwise the
/// constraint holds only when no all-different instantiation of its negative
/// variables satisfies it. Instances bound to the constraint's normal
/// variables are not candidates for its negative ones.
pub(crate) fn holds<'s>(
    con: &CspConstraint,
    csp: &Csp,
    get: Binding<'_, 's>,
    neg_domains: &HashMap<String, Vec<&'s Instance>>,
    scene: &Scene,
    th: &Thresholds,
) -> Result<bool, SolverError> {
    let mut negatives: Vec<&str> = Vec::new();
    let mut taken: Vec<&str> = Vec::new();
    for v in con.variables() {
        if csp.is_negative(v) {
            if !negatives.contains(&v) {
                negatives.push(v);
            }
        } else {
            taken.push(get(v).ok_or_else(|| SolverError::Unassigned(v.to_string()))?.id.as_str());
        }
    }
    if negatives.is_empty() {
        return eval_constraint(con, get, scene, th);
    }

    let mut bound: Vec<&'s Instance> = Vec::with_capacity(negatives.len());
    let satisfied = any_negative_instantiation(con, get, &negatives, neg_domains, &taken, &mut bound, scene, th)?;
    Ok(!satisfied)
}

#[allow(clippy::too_many_arguments)]
fn any_negative_instantiation<'s>(
    con: &CspConstraint,
    get: Binding<'_, 's>,
    negatives: &[&str],
    neg_domains: &HashMap<String, Vec<&'s Instance>>,
    taken: &[&str],
    bound: &mut Vec<&'s Instance>,
    scene: &Scene,
    th: &Thresholds,
) -> Result<bool, SolverError> {
    let depth = bound.len();
    if depth == negatives.len() {
        let overlay = |name: &str| match negatives.iter().position(|n| *n == name) {
            Some(i) => Some(bound[i]),
            None => get(name),
        };
        return eval_constraint(con, &overlay, scene, th);
    }
    let domain = neg_domains.get(negatives[depth]).map(Vec::as_slice).unwrap_or(&[]);
    for &cand in domain {
        if taken.contains(&cand.id.as_str()) || bound.iter().any(|b| b.id == cand.id) {
            continue;
        }
        bound.push(cand);
        let hit = any_negative_instantiation(con, get, negatives, neg_domains, taken, bound, scene, th)?;
        bound.pop();
        if hit {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Checks one spatial or comparison constraint against a full assignment.
///
/// Every variable the constraint mentions must be bound in `assign`; negative
/// variables are bound transiently by callers probing their domains.
pub fn check_solution(assign: &Assignment, con: &CspConstraint, scene: &Scene, th: &Thresholds) -> Result<bool, SolverError> {
    for v in con.variables() {
        let id = assign.get(v).ok_or_else(|| SolverError::Unassigned(v.to_string()))?;
        if scene.instance(id).is_none() {
            return Err(SolverError::UnknownInstance(id.clone()));
        }
    }
    let get = |name: &str| assign.get(name).and_then(|id| scene.instance(id));
    eval_constraint(con, &get, scene, th)
}
