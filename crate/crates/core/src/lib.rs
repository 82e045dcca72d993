//! Zero-shot 3D visual grounding as constraint satisfaction.
//!
//! A grounding query is answered in four steps:
//!
//! 1. a [`scene::Scene`] of labeled, axis-aligned instances is loaded,
//! 2. a short grounding program (hand-written or produced by a chat model via
//!    [`llm_gateway`]) is parsed and lowered into a [`program::Csp`],
//! 3. the [`solver`] enumerates every all-different assignment that satisfies
//!    the spatial constraints, applies min/max constraints last and picks one
//!    solution with a distance heuristic,
//! 4. the [`harness`] scores predictions against ground truth.

pub mod geometry;
pub mod harness;
pub mod llm_gateway;
pub mod program;
pub mod scene;
pub mod solver;

pub use geometry::{iou_3d, RelationKind, ScoreFunc, Thresholds, ViewerFrame};
pub use program::{lower, parse, Csp, CspConstraint, CspVariable, Diagnostic, Polarity, ProgramStmt};
pub use scene::{load_scene, Aabb, Instance, Point3, Scene};
pub use solver::{solve, solve_local, Assignment, Engine, GroundingResult, Heuristic, SolveStatus, SolverConfig};
