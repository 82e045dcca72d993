//! Greedy grounding through local constraints.
//!
//! Each variable keeps a candidate list. Constraints are processed one at a
//! time, each narrowing the candidates of its subject variable given the
//! current candidates of the others. There is no backtracking, so a wrong
//! early choice is never revisited; that is the point of this baseline.

use std::collections::{BTreeMap, HashMap};

use crate::program::{Csp, CspConstraint, Polarity};
use crate::scene::{domain_of, Instance, Scene};

use super::check::holds;
use super::minmax::{extreme_indices, group_scores};
use super::{empty_domain_diagnostics, GroundingResult, SolverConfig, SolverDiagnostic, SolverError};

/// The variable a constraint filters: its target, or the first normal
/// variable when the target is negative.
fn subject<'c>(con: &'c CspConstraint, csp: &Csp) -> Option<&'c str> {
    con.variables().find(|v| !csp.is_negative(v))
}

fn others<'c>(con: &'c CspConstraint, csp: &Csp, subject: &str) -> Vec<&'c str> {
    let mut out: Vec<&str> = Vec::new();
    for v in con.variables() {
        if v != subject && !csp.is_negative(v) && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

struct Local<'c, 's> {
    csp: &'c Csp,
    scene: &'s Scene,
    cfg: &'c SolverConfig,
    candidates: BTreeMap<String, Vec<&'s Instance>>,
    neg_domains: HashMap<String, Vec<&'s Instance>>,
}

impl<'c, 's> Local<'c, 's> {
    /// Whether some all-different choice of `rest` candidates, together with
    /// the bindings so far, satisfies `con`.
    fn satisfiable<'n>(
        &self,
        con: &CspConstraint,
        rest: &[&'n str],
        bound: &mut Vec<(&'n str, &'s Instance)>,
    ) -> Result<bool, SolverError> {
        let Some((&var, tail)) = rest.split_first() else {
            let get = |name: &str| bound.iter().find(|(n, _)| *n == name).map(|(_, i)| *i);
            return holds(con, self.csp, &get, &self.neg_domains, self.scene, &self.cfg.thresholds);
        };
        for &cand in &self.candidates[var] {
            if bound.iter().any(|(_, b)| b.id == cand.id) {
                continue;
            }
            bound.push((var, cand));
            let ok = self.satisfiable(con, tail, bound)?;
            bound.pop();
            if ok {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn filter(&mut self, con: &'c CspConstraint, subj: &'c str) -> Result<(), SolverError> {
        let current = self.candidates[subj].clone();
        let kept = if con.kind.is_minmax() {
            self.filter_minmax(con, &current)?
        } else {
            let rest = others(con, self.csp, subj);
            let mut kept = Vec::new();
            for cand in current {
                let mut bound = vec![(subj, cand)];
                if self.satisfiable(con, &rest, &mut bound)? {
                    kept.push(cand);
                }
            }
            kept
        };
        self.candidates.insert(subj.to_string(), kept);
        Ok(())
    }

    /// Keeps candidates attaining the extreme among the current candidates,
    /// for at least one anchor candidate when the constraint has an anchor.
    fn filter_minmax(&self, con: &CspConstraint, current: &[&'s Instance]) -> Result<Vec<&'s Instance>, SolverError> {
        let func = con.score_func.expect("min/max constraints carry a score function");
        let anchors: Vec<Option<&Instance>> = match con.anchors.first() {
            Some(a) => self.candidates[a.as_str()].iter().map(|i| Some(*i)).collect(),
            None => vec![None],
        };
        let mut keep = vec![false; current.len()];
        for anchor in anchors {
            let members: Vec<usize> = (0..current.len()).filter(|&i| anchor.is_none_or(|a| a.id != current[i].id)).collect();
            let group: Vec<&Instance> = members.iter().map(|&i| current[i]).collect();
            let scores = group_scores(func, &group, anchor, self.scene)?;
            for j in extreme_indices(con.kind, &scores) {
                keep[members[j]] = true;
            }
        }
        Ok(current.iter().zip(keep).filter_map(|(c, k)| k.then_some(*c)).collect())
    }
}

/// Local-constraint grounding.
///
/// A constraint becomes eligible once none of its non-subject variables is
/// still the subject of another unprocessed constraint; the first eligible
/// constraint in textual order is processed next, min/max constraints only
/// when no other constraint is eligible. If nothing is eligible while
/// constraints remain, the constraints are cyclic and grounding fails. The
/// target is the first surviving candidate, every other variable reports its
/// first candidate.
pub fn solve_local(csp: &Csp, scene: &Scene, cfg: &SolverConfig) -> GroundingResult {
    if let Err(e) = csp.validate().and_then(|_| cfg.validate()) {
        return GroundingResult::invalid_program([e]);
    }
    let mut diags = empty_domain_diagnostics(csp, scene);
    if !diags.is_empty() {
        return GroundingResult::unsatisfiable(csp, diags);
    }

    let domains = |polarity: Polarity| {
        csp.variables.iter().filter(move |v| v.polarity == polarity).map(|v| (v.name.clone(), domain_of(scene, &v.label_set)))
    };
    let mut local = Local {
        csp,
        scene,
        cfg,
        candidates: domains(Polarity::Normal).collect(),
        neg_domains: domains(Polarity::Negative).collect(),
    };

    let mut pending: Vec<(&CspConstraint, &str)> = Vec::new();
    for con in csp.constraints.iter().filter(|c| cfg.minmax_enabled || !c.kind.is_minmax()) {
        match subject(con, csp) {
            Some(s) => pending.push((con, s)),
            None => {
                diags.push(SolverDiagnostic::new(
                    "local",
                    format!("constraint on line {} has no normal variable", con.source_line),
                    None,
                ));
                return GroundingResult::unsatisfiable(csp, diags);
            }
        }
    }

    while !pending.is_empty() {
        let eligible = |i: usize| {
            let (con, subj) = pending[i];
            others(con, csp, subj).iter().all(|v| pending.iter().enumerate().all(|(j, (_, s))| j == i || s != v))
        };
        let pick = (0..pending.len())
            .find(|&i| eligible(i) && !pending[i].0.kind.is_minmax())
            .or_else(|| (0..pending.len()).find(|&i| eligible(i)));
        let Some(i) = pick else {
            let lines: Vec<String> = pending.iter().map(|(c, _)| c.source_line.to_string()).collect();
            diags.push(SolverDiagnostic::new(
                "local",
                format!("cyclic constraints (lines {})", lines.join(", ")),
                Some(pending.len()),
            ));
            return GroundingResult::unsatisfiable(csp, diags);
        };
        let (con, subj) = pending.remove(i);
        if let Err(e) = local.filter(con, subj) {
            return GroundingResult::invalid_program([e.to_string()]);
        }
        let left = local.candidates[subj].len();
        diags.push(SolverDiagnostic::new("local", format!("line {}: candidates left for `{subj}`", con.source_line), Some(left)));
    }

    let mut chosen = BTreeMap::new();
    for (var, cands) in &local.candidates {
        match cands.first() {
            Some(first) => {
                chosen.insert(var.clone(), first.id.clone());
            }
            None => {
                diags.push(SolverDiagnostic::new("local", format!("no candidates left for `{var}`"), Some(0)));
                return GroundingResult::unsatisfiable(csp, diags);
            }
        }
    }
    let count = local.candidates[&csp.target].len();
    GroundingResult::solved(csp, scene, &chosen, count, diags)
}
