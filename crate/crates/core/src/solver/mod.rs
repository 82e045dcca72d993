//! Grounding by constraint satisfaction.
//!
//! The global engine ([`solve`]) enumerates every all-different assignment of
//! the normal variables, filters it with the spatial and comparison
//! constraints, applies min/max constraints last and picks one solution with a
//! heuristic. [`solve_local`] is the greedy per-variable baseline.

mod check;
mod enumerate;
mod local;
mod minmax;
mod select;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{viewer_frame, GeometryError, RelationFamily, Thresholds};
use crate::program::{Csp, Polarity};
use crate::scene::{domain_of, Aabb, Instance, Scene};

pub use check::check_solution;
pub use enumerate::{enumerate_valid, Enumeration};
pub use local::solve_local;
pub use minmax::apply_minmax;
pub use select::{average_pairwise_distance, select_solution, TIE_TOLERANCE};

/// Variable name to instance id, normal variables only.
pub type Assignment = BTreeMap<String, String>;

pub const DEFAULT_MAX_SOLUTIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Heuristic {
    MinAvgDistance,
    MaxAvgDistance,
    Random { seed: u64 },
    First,
}

impl std::str::FromStr for Heuristic {
    type Err = String;

    /// Accepts `min`, `max`, `first` and `random:<seed>` (plus the long names).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "min" | "min_avg_distance" => Ok(Heuristic::MinAvgDistance),
            "max" | "max_avg_distance" => Ok(Heuristic::MaxAvgDistance),
            "first" => Ok(Heuristic::First),
            other => match other.split_once(':') {
                Some(("random", seed)) => {
                    seed.parse().map(|seed| Heuristic::Random { seed }).map_err(|_| format!("invalid random seed `{seed}`"))
                }
                _ => Err(format!("unknown heuristic `{other}` (expected min, max, first or random:<seed>)")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Global,
    Local,
}

impl std::str::FromStr for Engine {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "global" => Ok(Engine::Global),
            "local" => Ok(Engine::Local),
            other => Err(format!("unknown engine `{other}` (expected global or local)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub thresholds: Thresholds,
    pub heuristic: Heuristic,
    pub engine: Engine,
    pub minmax_enabled: bool,
    pub max_solutions: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            thresholds: Thresholds::default(),
            heuristic: Heuristic::MinAvgDistance,
            engine: Engine::Global,
            minmax_enabled: true,
            max_solutions: DEFAULT_MAX_SOLUTIONS,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.thresholds.validate()?;
        if self.max_solutions == 0 {
            return Err("max_solutions must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Solved,
    Unsatisfiable,
    InvalidProgram,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverDiagnostic {
    pub stage: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl SolverDiagnostic {
    pub fn new(stage: &str, message: impl Into<String>, count: Option<usize>) -> Self {
        SolverDiagnostic { stage: stage.to_string(), message: message.into(), count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub status: SolveStatus,
    pub target_variable: Option<String>,
    pub target_instance: Option<String>,
    pub target_bbox: Option<Aabb>,
    pub anchor_assignment: BTreeMap<String, String>,
    /// Valid solutions before the heuristic (remaining target candidates for
    /// the local engine).
    pub solution_count: usize,
    pub diagnostics: Vec<SolverDiagnostic>,
}

impl GroundingResult {
    fn empty(status: SolveStatus, target: Option<String>, diagnostics: Vec<SolverDiagnostic>) -> Self {
        GroundingResult {
            status,
            target_variable: target,
            target_instance: None,
            target_bbox: None,
            anchor_assignment: BTreeMap::new(),
            solution_count: 0,
            diagnostics,
        }
    }

    /// Result for a program that failed to parse, lower or validate.
    pub fn invalid_program(messages: impl IntoIterator<Item = String>) -> Self {
        let diags = messages.into_iter().map(|m| SolverDiagnostic::new("program", m, None)).collect();
        Self::empty(SolveStatus::InvalidProgram, None, diags)
    }

    fn unsatisfiable(csp: &Csp, diagnostics: Vec<SolverDiagnostic>) -> Self {
        Self::empty(SolveStatus::Unsatisfiable, Some(csp.target.clone()), diagnostics)
    }

    fn solved(csp: &Csp, scene: &Scene, chosen: &Assignment, count: usize, diagnostics: Vec<SolverDiagnostic>) -> Self {
        let target = &chosen[&csp.target];
        let bbox = scene.instance(target).map(|i| i.bbox);
        let anchors = chosen.iter().filter(|(k, _)| **k != csp.target).map(|(k, v)| (k.clone(), v.clone())).collect();
        GroundingResult {
            status: SolveStatus::Solved,
            target_variable: Some(csp.target.clone()),
            target_instance: Some(target.clone()),
            target_bbox: bbox,
            anchor_assignment: anchors,
            solution_count: count,
            diagnostics,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("variable `{0}` is not assigned")]
    Unassigned(String),
    #[error("variable `{0}` is not defined")]
    UnknownVariable(String),
    #[error("instance `{0}` is not in the scene")]
    UnknownInstance(String),
    #[error("{0} constraints are applied after enumeration, not checked per assignment")]
    NotCheckable(crate::geometry::RelationKind),
    #[error("no solutions to select from")]
    NoSolutions,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Normal variables sorted by name with their id-sorted domains.
fn normal_domains<'s>(csp: &Csp, scene: &'s Scene) -> Vec<(String, Vec<&'s Instance>)> {
    let mut vars: Vec<_> = csp
        .variables
        .iter()
        .filter(|v| v.polarity == Polarity::Normal)
        .map(|v| (v.name.clone(), domain_of(scene, &v.label_set)))
        .collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    vars
}

fn empty_domain_diagnostics(csp: &Csp, scene: &Scene) -> Vec<SolverDiagnostic> {
    normal_domains(csp, scene)
        .into_iter()
        .filter(|(_, d)| d.is_empty())
        .map(|(name, _)| {
            let labels = csp.variable(&name).map(|v| v.label_set.join(", ")).unwrap_or_default();
            SolverDiagnostic::new("domain", format!("variable `{name}` has an empty domain (labels: {labels})"), Some(0))
        })
        .collect()
}

/// Flags LEFT/RIGHT constraints whose assigned anchor sits horizontally on
/// the scene center, where the viewer frame falls back to a fixed heading.
fn degenerate_frame_diagnostics(csp: &Csp, scene: &Scene, chosen: &Assignment) -> Vec<SolverDiagnostic> {
    csp.constraints
        .iter()
        .filter(|c| matches!(c.kind.family(), RelationFamily::Left | RelationFamily::Right))
        .filter_map(|c| {
            let anchor = chosen.get(c.anchors.first()?)?;
            let inst = scene.instance(anchor)?;
            viewer_frame(inst.center(), scene.scene_center()).degenerate.then(|| {
                SolverDiagnostic::new(
                    "geometry",
                    format!("anchor `{anchor}` of line {} sits on the scene center; fallback viewer frame used", c.source_line),
                    None,
                )
            })
        })
        .collect()
}

/// Global grounding: enumerate, apply min/max, select.
pub fn solve(csp: &Csp, scene: &Scene, cfg: &SolverConfig) -> GroundingResult {
    if let Err(e) = csp.validate().and_then(|_| cfg.validate()) {
        return GroundingResult::invalid_program([e]);
    }
    let mut diags = empty_domain_diagnostics(csp, scene);
    if !diags.is_empty() {
        return GroundingResult::unsatisfiable(csp, diags);
    }

    let enumeration = match enumerate_valid(csp, scene, &cfg.thresholds, cfg.max_solutions) {
        Ok(e) => e,
        Err(e) => return GroundingResult::invalid_program([e.to_string()]),
    };
    diags.push(SolverDiagnostic::new("enumerate", "valid assignments", Some(enumeration.solutions.len())));
    if enumeration.truncated {
        diags.push(SolverDiagnostic::new(
            "enumerate",
            format!("enumeration truncated at max_solutions = {}", cfg.max_solutions),
            Some(cfg.max_solutions),
        ));
    }
    let count = enumeration.solutions.len();
    let mut solutions = enumeration.solutions;

    if cfg.minmax_enabled && csp.constraints.iter().any(|c| c.kind.is_minmax()) {
        solutions = match apply_minmax(solutions, csp, scene) {
            Ok(s) => s,
            Err(e) => return GroundingResult::invalid_program([e.to_string()]),
        };
        diags.push(SolverDiagnostic::new("minmax", "assignments after min/max", Some(solutions.len())));
    }

    let chosen = match select_solution(&solutions, cfg.heuristic, scene) {
        Ok(a) => a,
        Err(_) => return GroundingResult::unsatisfiable(csp, diags),
    };
    diags.extend(degenerate_frame_diagnostics(csp, scene, chosen));
    GroundingResult::solved(csp, scene, chosen, count, diags)
}

/// Dispatches on `cfg.engine`.
pub fn ground(csp: &Csp, scene: &Scene, cfg: &SolverConfig) -> GroundingResult {
    match cfg.engine {
        Engine::Global => solve(csp, scene, cfg),
        Engine::Local => solve_local(csp, scene, cfg),
    }
}
