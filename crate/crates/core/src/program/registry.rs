//! Function registry: the signatures shown to the model and the signature
//! table the lowering pass validates calls against.

use crate::geometry::{RelationKind, ScoreFunc};

const SIGNATURES: &str = "\
CONSTRAINT_ABOVE(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_BELOW(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_ON(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_UNDER(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_FAR(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_AWAY(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_ACROSS(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_OPPOSITE(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_NEAR(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_BESIDE(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_CLOSE(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_LEFT(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_RIGHT(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_FRONT(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_BEHIND(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_CENTER(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_MIDDLE(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_IN(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_INSIDE(target: CSPVar, anchor: CSPVar) -> CSPConstraint
CONSTRAINT_BETWEEN(target: CSPVar, anchors: set[CSPVar]) -> CSPConstraint
CONSTRAINT_LESS(target: CSPVar, reference: CSPVar, score_func: str, anchor: CSPVar | None = None) -> CSPConstraint
CONSTRAINT_MORE(target: CSPVar, reference: CSPVar, score_func: str, anchor: CSPVar | None = None) -> CSPConstraint
CONSTRAINT_MAX_OF(target: CSPVar, score_func: str, anchor: CSPVar | None = None) -> CSPConstraint
CONSTRAINT_MIN_OF(target: CSPVar, score_func: str, anchor: CSPVar | None = None) -> CSPConstraint
DEFINE_NEGATIVE_VARIABLE(labels: list[str]) -> CSPVar
DEFINE_VARIABLE(labels: list[str]) -> CSPVar
SET_TARGET(obj: CSPVar) -> None";

/// The predefined-function signature block, one function per line.
pub fn registry_signatures() -> &'static str {
    SIGNATURES
}

/// The score-function list substituted into the system prompt.
pub fn score_function_list() -> String {
    ScoreFunc::ALL.iter().map(|f| format!("\"{}\": {}", f.name(), score_description(*f))).collect::<Vec<_>>().join("\n")
}

fn score_description(f: ScoreFunc) -> &'static str {
    match f {
        ScoreFunc::Distance => "center distance between the instance and the anchor (requires an anchor)",
        ScoreFunc::SizeX => "bounding-box extent along the x-axis",
        ScoreFunc::SizeY => "bounding-box extent along the y-axis",
        ScoreFunc::SizeZ => "bounding-box extent along the z-axis (height)",
        ScoreFunc::Size => "largest bounding-box extent over the three axes",
        ScoreFunc::PositionZ => "z-coordinate of the instance center",
        ScoreFunc::Left => "higher for instances further to the left, seen from the room center",
        ScoreFunc::Right => "higher for instances further to the right, seen from the room center",
        ScoreFunc::Front => "higher for instances further away from the room center",
        ScoreFunc::DistanceToCenter => "distance from the instance center to the room center",
        ScoreFunc::DistanceToMiddle => "same as \"distance-to-center\"",
    }
}

/// What a registered function builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    DefineVariable,
    DefineNegativeVariable,
    SetTarget,
    Constraint(RelationKind),
}

/// Resolves a function name, accepting the `DEF_VAR`/`DEF_NEG_VAR`
/// abbreviations and constraint names without the `CONSTRAINT_` prefix.
pub fn resolve_builtin(name: &str) -> Option<Builtin> {
    match name {
        "DEFINE_VARIABLE" | "DEF_VAR" => Some(Builtin::DefineVariable),
        "DEFINE_NEGATIVE_VARIABLE" | "DEF_NEG_VAR" => Some(Builtin::DefineNegativeVariable),
        "SET_TARGET" => Some(Builtin::SetTarget),
        other => RelationKind::from_name(other.strip_prefix("CONSTRAINT_").unwrap_or(other)).map(Builtin::Constraint),
    }
}

/// Keyword parameters as `(name, required)`.
pub fn parameters(b: Builtin) -> &'static [(&'static str, bool)] {
    match b {
        Builtin::DefineVariable | Builtin::DefineNegativeVariable => &[("labels", true)],
        Builtin::SetTarget => &[("obj", true)],
        Builtin::Constraint(RelationKind::Between) => &[("target", true), ("anchors", true)],
        Builtin::Constraint(k) if k.is_comparison() => {
            &[("target", true), ("reference", true), ("score_func", true), ("anchor", false)]
        }
        Builtin::Constraint(k) if k.is_minmax() => &[("target", true), ("score_func", true), ("anchor", false)],
        Builtin::Constraint(_) => &[("target", true), ("anchor", true)],
    }
}
