//! Backtracking enumeration of all valid assignments.

use std::collections::HashMap;

use crate::geometry::Thresholds;
use crate::program::{Csp, CspConstraint, Polarity};
use crate::scene::{domain_of, Instance, Scene};

use super::check::holds;
use super::{normal_domains, Assignment, SolverError};

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    /// Lexicographic by variable name, then instance id.
    pub solutions: Vec<Assignment>,
    /// The `max_solutions` cap was hit.
    pub truncated: bool,
}

struct Search<'c, 's> {
    csp: &'c Csp,
    scene: &'s Scene,
    th: &'c Thresholds,
    names: Vec<String>,
    domains: Vec<Vec<&'s Instance>>,
    neg_domains: HashMap<String, Vec<&'s Instance>>,
    /// Constraints checked once variable `i` (in name order) is bound.
    ready_at: Vec<Vec<&'c CspConstraint>>,
    /// Constraints without normal variables, checked before the search.
    unconditional: Vec<&'c CspConstraint>,
    max: usize,
    current: Vec<&'s Instance>,
    out: Vec<Assignment>,
    truncated: bool,
}

impl<'c, 's> Search<'c, 's> {
    fn binding(&self) -> impl Fn(&str) -> Option<&'s Instance> + '_ {
        |name| self.names.iter().position(|n| n == name).and_then(|i| self.current.get(i).copied())
    }

    fn run(&mut self) -> Result<(), SolverError> {
        for con in &self.unconditional {
            let get = self.binding();
            if !holds(con, self.csp, &get, &self.neg_domains, self.scene, self.th)? {
                return Ok(());
            }
        }
        self.descend()
    }

    fn descend(&mut self) -> Result<(), SolverError> {
        let depth = self.current.len();
        if depth == self.names.len() {
            if self.out.len() >= self.max {
                self.truncated = true;
                return Ok(());
            }
            let sol = self.names.iter().cloned().zip(self.current.iter().map(|i| i.id.clone())).collect();
            self.out.push(sol);
            return Ok(());
        }
        for k in 0..self.domains[depth].len() {
            let cand = self.domains[depth][k];
            if self.current.iter().any(|c| c.id == cand.id) {
                continue;
            }
            self.current.push(cand);
            let mut ok = true;
            for con in &self.ready_at[depth] {
                let get = self.binding();
                if !holds(con, self.csp, &get, &self.neg_domains, self.scene, self.th)? {
                    ok = false;
                    break;
                }
            }
            if ok {
                self.descend()?;
            }
            self.current.pop();
            if self.truncated {
                break;
            }
        }
        Ok(())
    }
}

/// Enumerates every all-different assignment of the normal variables that
/// satisfies all spatial and comparison constraints.
///
/// Min/max constraints are ignored here. A constraint involving a negative
/// variable rejects an assignment if any instance of that variable's domain
/// satisfies it. At most `max_solutions` assignments are returned.
pub fn enumerate_valid(csp: &Csp, scene: &Scene, th: &Thresholds, max_solutions: usize) -> Result<Enumeration, SolverError> {
    let (names, domains): (Vec<String>, Vec<Vec<&Instance>>) = normal_domains(csp, scene).into_iter().unzip();
    let neg_domains = csp
        .variables
        .iter()
        .filter(|v| v.polarity == Polarity::Negative)
        .map(|v| (v.name.clone(), domain_of(scene, &v.label_set)))
        .collect();

    let mut ready_at = vec![Vec::new(); names.len()];
    let mut unconditional = Vec::new();
    for con in csp.constraints.iter().filter(|c| !c.kind.is_minmax()) {
        let mut last = None;
        for v in con.variables() {
            if csp.variable(v).is_none() {
                return Err(SolverError::UnknownVariable(v.to_string()));
            }
            if let Some(i) = names.iter().position(|n| n == v) {
                last = last.max(Some(i));
            }
        }
        match last {
            Some(i) => ready_at[i].push(con),
            None => unconditional.push(con),
        }
    }

    let mut search = Search {
        csp,
        scene,
        th,
        names,
        domains,
        neg_domains,
        ready_at,
        unconditional,
        max: max_solutions,
        current: Vec::new(),
        out: Vec::new(),
        truncated: false,
    };
    search.run()?;
    Ok(Enumeration { solutions: search.out, truncated: search.truncated })
}
