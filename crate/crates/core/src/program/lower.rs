//! Lowering of parsed statements into a validated [`Csp`].

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Call, ProgramStmt, Value};
use super::registry::{parameters, resolve_builtin, Builtin};
use crate::geometry::{RelationKind, ScoreFunc};
use crate::scene::normalize_label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Polarity {
    Normal,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspVariable {
    pub name: String,
    /// Normalized, de-duplicated labels in first-seen order.
    pub label_set: Vec<String>,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspConstraint {
    pub kind: RelationKind,
    pub target: String,
    pub anchors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_func: Option<ScoreFunc>,
    pub source_line: usize,
}

impl CspConstraint {
    /// Every variable this constraint mentions, target first.
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.target.as_str()).chain(self.reference.as_deref()).chain(self.anchors.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Csp {
    pub variables: Vec<CspVariable>,
    pub constraints: Vec<CspConstraint>,
    pub target: String,
}

impl Csp {
    pub fn variable(&self, name: &str) -> Option<&CspVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn is_negative(&self, name: &str) -> bool {
        self.variable(name).is_some_and(|v| v.polarity == Polarity::Negative)
    }

    /// Structural checks that hold for every lowered program.
    pub fn validate(&self) -> Result<(), String> {
        let mut names = BTreeSet::new();
        for v in &self.variables {
            if !names.insert(v.name.as_str()) {
                return Err(format!("duplicate variable `{}`", v.name));
            }
            if v.label_set.is_empty() {
                return Err(format!("variable `{}` has no labels", v.name));
            }
        }
        match self.variable(&self.target) {
            None => return Err(format!("target `{}` is not defined", self.target)),
            Some(v) if v.polarity == Polarity::Negative => return Err("target is a negative variable".into()),
            _ => {}
        }
        for c in &self.constraints {
            if let Some(missing) = c.variables().find(|n| self.variable(n).is_none()) {
                return Err(format!("constraint on line {} references undefined `{missing}`", c.source_line));
            }
            let ok = match c.kind.family() {
                crate::geometry::RelationFamily::Between => c.anchors.len() >= 2 && c.score_func.is_none(),
                crate::geometry::RelationFamily::Compare => {
                    c.reference.is_some() && c.score_func.is_some() && c.anchors.len() <= 1
                }
                crate::geometry::RelationFamily::MinMax => {
                    c.reference.is_none() && c.score_func.is_some() && c.anchors.len() <= 1
                }
                _ => c.anchors.len() == 1 && c.score_func.is_none() && c.reference.is_none(),
            };
            if !ok {
                return Err(format!("malformed {} constraint on line {}", c.kind, c.source_line));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {}: {}", self.line, self.col, sev, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lowered {
    pub csp: Csp,
    /// Warnings only; errors abort lowering.
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", render_diagnostics(.diagnostics))]
pub struct LowerError {
    /// All diagnostics collected, at least one of them an error.
    pub diagnostics: Vec<Diagnostic>,
}

pub fn render_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

struct Lowerer {
    strict: bool,
    diags: Vec<Diagnostic>,
    variables: Vec<CspVariable>,
    index: HashMap<String, usize>,
    constraints: Vec<CspConstraint>,
    target: Option<(String, usize)>,
}

impl Lowerer {
    fn error(&mut self, stmt: &ProgramStmt, message: impl Into<String>) {
        self.diags.push(Diagnostic { line: stmt.line, col: stmt.col, severity: Severity::Error, message: message.into() });
    }

    fn warn(&mut self, stmt: &ProgramStmt, message: impl Into<String>) {
        self.diags.push(Diagnostic { line: stmt.line, col: stmt.col, severity: Severity::Warning, message: message.into() });
    }

    /// Error in strict mode, warning in lenient mode.
    fn strict_error(&mut self, stmt: &ProgramStmt, message: impl Into<String>) {
        if self.strict {
            self.error(stmt, message);
        } else {
            self.warn(stmt, message);
        }
    }

    fn check_kwargs(&mut self, stmt: &ProgramStmt, call: &Call, builtin: Builtin) -> Option<HashMap<&'static str, Value>> {
        let params = parameters(builtin);
        let mut bound: HashMap<&'static str, Value> = HashMap::new();
        if let Some(v) = &call.positional {
            if params.len() != 1 {
                self.error(stmt, format!("{}: positional arguments are only accepted for single-parameter functions", call.func));
                return None;
            }
            bound.insert(params[0].0, v.clone());
        }
        for (k, v) in &call.kwargs {
            match params.iter().find(|(p, _)| p == k) {
                Some((p, _)) => {
                    bound.insert(p, v.clone());
                }
                None => {
                    self.error(stmt, format!("{}: unexpected keyword argument `{k}`", call.func));
                    return None;
                }
            }
        }
        for (p, required) in params {
            if *required && !bound.contains_key(p) {
                self.error(stmt, format!("{}: missing required argument `{p}`", call.func));
                return None;
            }
        }
        Some(bound)
    }

    /// Resolves a variable reference, repairing near-miss typos in lenient mode.
    fn resolve_var(&mut self, stmt: &ProgramStmt, name: &str) -> Option<String> {
        if self.index.contains_key(name) {
            return Some(name.to_string());
        }
        if !self.strict {
            let close: Vec<&str> =
                self.variables.iter().map(|v| v.name.as_str()).filter(|v| strsim::levenshtein(v, name) <= 1).collect();
            if let [only] = close.as_slice() {
                let repaired = only.to_string();
                self.warn(stmt, format!("undefined variable `{name}` repaired to `{repaired}`"));
                return Some(repaired);
            }
        }
        self.error(stmt, format!("undefined variable `{name}`"));
        None
    }

    fn var_arg(&mut self, stmt: &ProgramStmt, param: &str, value: &Value) -> Option<String> {
        match value {
            Value::VarRef(name) => self.resolve_var(stmt, name),
            other => {
                self.error(stmt, format!("argument `{param}` must be a variable, found `{other}`"));
                None
            }
        }
    }

    fn define(&mut self, stmt: &ProgramStmt, call: &Call, polarity: Polarity, builtin: Builtin) {
        let Some(args) = self.check_kwargs(stmt, call, builtin) else { return };
        let Some(name) = stmt.assigned_name() else {
            self.strict_error(stmt, format!("result of {} is not assigned to a variable", call.func));
            return;
        };
        let raw = match &args["labels"] {
            Value::StringList(items) => items.clone(),
            Value::StringLit(s) if !self.strict => vec![s.clone()],
            other => {
                self.error(stmt, format!("argument `labels` must be a list of strings, found `{other}`"));
                return;
            }
        };
        let mut label_set: Vec<String> = Vec::new();
        for l in raw.iter().map(|l| normalize_label(l)) {
            if l.is_empty() {
                self.error(stmt, "empty label");
                return;
            }
            if !label_set.contains(&l) {
                label_set.push(l);
            }
        }
        if self.index.contains_key(name) {
            self.error(stmt, format!("duplicate variable `{name}`"));
            return;
        }
        self.index.insert(name.to_string(), self.variables.len());
        self.variables.push(CspVariable { name: name.to_string(), label_set, polarity });
    }

    fn constrain(&mut self, stmt: &ProgramStmt, call: &Call, kind: RelationKind) {
        let Some(args) = self.check_kwargs(stmt, call, Builtin::Constraint(kind)) else { return };
        let Some(target) = self.var_arg(stmt, "target", &args["target"]) else { return };

        let mut anchors = Vec::new();
        if let Some(v) = args.get("anchors") {
            let names = match v {
                Value::VarSet(n) | Value::VarList(n) => n.clone(),
                other => {
                    self.error(stmt, format!("argument `anchors` must be a set of variables, found `{other}`"));
                    return;
                }
            };
            for n in names {
                let Some(r) = self.resolve_var(stmt, &n) else { return };
                if anchors.contains(&r) {
                    self.error(stmt, format!("variable `{r}` listed twice in `anchors`"));
                    return;
                }
                anchors.push(r);
            }
            if anchors.len() < 2 {
                self.error(stmt, format!("{kind} needs at least two anchors"));
                return;
            }
        }
        if let Some(v) = args.get("anchor") {
            let Some(a) = self.var_arg(stmt, "anchor", v) else { return };
            anchors.push(a);
        }
        let reference = match args.get("reference") {
            Some(v) => match self.var_arg(stmt, "reference", v) {
                Some(r) => Some(r),
                None => return,
            },
            None => None,
        };
        let score_func = match args.get("score_func") {
            Some(Value::StringLit(s)) => match s.parse::<ScoreFunc>() {
                Ok(f) => Some(f),
                Err(e) => {
                    self.error(stmt, e);
                    return;
                }
            },
            Some(other) => {
                self.error(stmt, format!("argument `score_func` must be a string, found `{other}`"));
                return;
            }
            None => None,
        };
        if score_func.is_some_and(ScoreFunc::requires_anchor) && anchors.is_empty() {
            self.error(stmt, format!("score function `{}` requires an anchor", score_func.unwrap()));
            return;
        }

        let constraint = CspConstraint { kind, target, anchors, reference, score_func, source_line: stmt.line };
        let names: Vec<&str> = constraint.variables().collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                self.error(stmt, format!("variable `{n}` appears twice in one {kind} constraint"));
                return;
            }
        }
        let negative = |n: &str| self.variables[self.index[n]].polarity == Polarity::Negative;
        if kind.is_minmax() && names.iter().any(|n| negative(n)) {
            self.error(stmt, format!("{kind} cannot involve a negative variable"));
            return;
        }
        if !names.iter().any(|n| !negative(n)) {
            self.strict_error(stmt, format!("{kind} constraint involves only negative variables"));
            return;
        }
        if kind.is_comparison() && constraint.anchors.first().is_some_and(|a| negative(a)) {
            self.error(stmt, format!("the score anchor of {kind} cannot be a negative variable"));
            return;
        }
        self.constraints.push(constraint);
    }

    fn set_target(&mut self, stmt: &ProgramStmt, call: &Call) {
        let Some(args) = self.check_kwargs(stmt, call, Builtin::SetTarget) else { return };
        let Some(name) = self.var_arg(stmt, "obj", &args["obj"]) else { return };
        if self.variables[self.index[&name]].polarity == Polarity::Negative {
            self.error(stmt, format!("target `{name}` is a negative variable"));
            return;
        }
        self.target = Some((name, stmt.line));
    }
}

/// Lowers parsed statements into a [`Csp`].
///
/// Strict mode rejects unknown functions, statements after `SET_TARGET` and
/// unused variables. Lenient mode downgrades those to warnings, skips the
/// offending statements and repairs variable names off by a single edit.
pub fn lower(stmts: &[ProgramStmt], strict: bool) -> Result<Lowered, LowerError> {
    let mut l = Lowerer {
        strict,
        diags: Vec::new(),
        variables: Vec::new(),
        index: HashMap::new(),
        constraints: Vec::new(),
        target: None,
    };

    for stmt in stmts {
        let call = stmt.call();
        if let Some((_, line)) = &l.target {
            let line = *line;
            if resolve_builtin(&call.func) == Some(Builtin::SetTarget) {
                l.strict_error(stmt, format!("multiple SET_TARGET calls (target already set on line {line})"));
            } else {
                l.strict_error(stmt, format!("statement after SET_TARGET (line {line}) ignored"));
            }
            continue;
        }
        match resolve_builtin(&call.func) {
            None => l.strict_error(stmt, format!("unknown function `{}`", call.func)),
            Some(b @ Builtin::DefineVariable) => l.define(stmt, call, Polarity::Normal, b),
            Some(b @ Builtin::DefineNegativeVariable) => l.define(stmt, call, Polarity::Negative, b),
            Some(Builtin::SetTarget) => l.set_target(stmt, call),
            Some(Builtin::Constraint(kind)) => l.constrain(stmt, call, kind),
        }
    }

    let Some((target, _)) = l.target.clone() else {
        let (line, col) = stmts.last().map_or((1, 1), |s| (s.line, s.col));
        l.diags.push(Diagnostic { line, col, severity: Severity::Error, message: "target not set".into() });
        return Err(LowerError { diagnostics: l.diags });
    };

    let used: BTreeSet<&str> = l.constraints.iter().flat_map(|c| c.variables()).collect();
    let unused: Vec<String> =
        l.variables.iter().filter(|v| v.name != target && !used.contains(v.name.as_str())).map(|v| v.name.clone()).collect();
    for name in unused {
        let stmt = stmts.iter().find(|s| s.assigned_name() == Some(name.as_str())).expect("defined by a statement");
        l.strict_error(stmt, format!("variable `{name}` is not used by any constraint"));
    }

    if l.diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(LowerError { diagnostics: l.diags });
    }
    let csp = Csp { variables: l.variables, constraints: l.constraints, target };
    debug_assert!(csp.validate().is_ok());
    Ok(Lowered { csp, diagnostics: l.diags })
}
