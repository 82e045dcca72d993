//! Dataset evaluation: query records, scene stores, metrics and the
//! synthetic scene generator used by the property suites.

mod config;
mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::iou_3d;
use crate::llm_gateway::{default_labels, LlmClient};
use crate::program::compile;
use crate::scene::{load_scene, normalize_label, Aabb, Scene};
use crate::solver::{ground, GroundingResult, SolveStatus, SolverConfig};

pub use config::EngineConfig;
pub use synth::{synth_scene, GeneratorSpec, ObjectSpec, Plant, PlantedTruth, Side, SynthError, SynthScene};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no records")]
    NoRecords,
    #[error("{0}")]
    Data(String),
    #[error("scene `{0}` not found")]
    MissingScene(String),
    #[error("scene `{id}`: {message}")]
    Scene { id: String, message: String },
    #[error("record {index}: no stored program, no program file and no LLM configured")]
    NoProgramSource { index: usize },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubsetTag {
    Unique,
    Multiple,
}

impl SubsetTag {
    fn key(self) -> &'static str {
        match self {
            SubsetTag::Unique => "unique",
            SubsetTag::Multiple => "multiple",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Bbox,
    Selection,
}

impl std::str::FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bbox" => Ok(EvalMode::Bbox),
            "selection" => Ok(EvalMode::Selection),
            other => Err(format!("unknown mode `{other}` (expected bbox or selection)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRecord {
    pub scene_id: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_bbox: Option<Aabb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_instance_id: Option<String>,
    pub gt_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_tag: Option<SubsetTag>,
}

/// Reads newline-delimited query records; blank lines are skipped.
pub fn read_records(source: impl BufRead) -> Result<Vec<QueryRecord>, HarnessError> {
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord =
            serde_json::from_str(&line).map_err(|e| HarnessError::Data(format!("query line {}: {e}", n + 1)))?;
        if rec.gt_bbox.is_none() && rec.gt_instance_id.is_none() {
            return Err(HarnessError::Data(format!("query line {}: needs gt_bbox or gt_instance_id", n + 1)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// UNIQUE iff exactly one non-virtual instance carries `gt_label`. Zero
/// matches classify as MULTIPLE and produce a diagnostic.
pub fn classify_query(scene: &Scene, gt_label: &str) -> (SubsetTag, Option<String>) {
    let label = normalize_label(gt_label);
    match scene.non_virtual().filter(|i| i.label == label).count() {
        1 => (SubsetTag::Unique, None),
        0 => (SubsetTag::Multiple, Some(format!("no instance labeled `{label}` in scene `{}`", scene.id))),
        _ => (SubsetTag::Multiple, None),
    }
}

/// Where scenes come from: a directory of `<scene_id>.json` documents or an
/// in-memory set.
#[derive(Debug, Clone)]
pub enum SceneStore {
    Dir(PathBuf),
    Memory(HashMap<String, Arc<Scene>>),
}

impl SceneStore {
    pub fn from_scenes(scenes: impl IntoIterator<Item = Scene>) -> Self {
        SceneStore::Memory(scenes.into_iter().map(|s| (s.id.clone(), Arc::new(s))).collect())
    }

    pub fn load(&self, id: &str) -> Result<Arc<Scene>, HarnessError> {
        match self {
            SceneStore::Memory(map) => map.get(id).cloned().ok_or_else(|| HarnessError::MissingScene(id.to_string())),
            SceneStore::Dir(dir) => {
                let path = dir.join(format!("{id}.json"));
                let file = File::open(&path).map_err(|_| HarnessError::MissingScene(id.to_string()))?;
                let scene = load_scene(file).map_err(|e| HarnessError::Scene { id: id.to_string(), message: e.to_string() })?;
                Ok(Arc::new(scene))
            }
        }
    }
}

/// How each record obtains its program: the stored `program` field first,
/// then `<programs_dir>/<index>.txt`, then the LLM.
#[derive(Clone, Copy)]
pub struct EvalOptions<'a> {
    pub mode: EvalMode,
    pub programs_dir: Option<&'a Path>,
    pub llm: Option<&'a LlmClient>,
    pub jobs: usize,
    pub strict: bool,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        EvalOptions { mode: EvalMode::Bbox, programs_dir: None, llm: None, jobs: 1, strict: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordStatus {
    Solved,
    Unsatisfiable,
    InvalidProgram,
    LlmError,
}

impl From<SolveStatus> for RecordStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Solved => RecordStatus::Solved,
            SolveStatus::Unsatisfiable => RecordStatus::Unsatisfiable,
            SolveStatus::InvalidProgram => RecordStatus::InvalidProgram,
        }
    }
}

/// One line of the per-record result log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub index: usize,
    pub scene_id: String,
    pub query: String,
    pub subset: SubsetTag,
    pub status: RecordStatus,
    pub predicted_instance: Option<String>,
    pub predicted_bbox: Option<Aabb>,
    pub iou: Option<f64>,
    pub correct_at_025: bool,
    pub correct_at_05: bool,
    pub correct_selection: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetMetrics {
    pub n_total: usize,
    pub n_solved: usize,
    pub acc_at_025: Option<f64>,
    pub acc_at_05: Option<f64>,
    pub selection_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub scene_id: String,
    pub query: String,
    pub status: RecordStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: EvalMode,
    pub n_total: usize,
    pub n_solved: usize,
    pub acc_at_025: Option<f64>,
    pub acc_at_05: Option<f64>,
    pub selection_accuracy: Option<f64>,
    pub per_subset: BTreeMap<String, SubsetMetrics>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub outcomes: Vec<RecordOutcome>,
}

fn subset_metrics<'a>(mode: EvalMode, outcomes: impl Iterator<Item = &'a RecordOutcome>) -> SubsetMetrics {
    let (mut n, mut solved, mut c25, mut c5, mut sel) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for o in outcomes {
        n += 1;
        solved += usize::from(o.status == RecordStatus::Solved);
        c25 += usize::from(o.correct_at_025);
        c5 += usize::from(o.correct_at_05);
        sel += usize::from(o.correct_selection);
    }
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let bbox = mode == EvalMode::Bbox;
    SubsetMetrics {
        n_total: n,
        n_solved: solved,
        acc_at_025: bbox.then(|| frac(c25)),
        acc_at_05: bbox.then(|| frac(c5)),
        selection_accuracy: (!bbox).then(|| frac(sel)),
    }
}

/// Aggregates a result log. Unsolved records count as incorrect.
pub fn report_from_outcomes(mode: EvalMode, outcomes: &[RecordOutcome]) -> MetricsReport {
    let all = subset_metrics(mode, outcomes.iter());
    let mut per_subset = BTreeMap::new();
    for tag in [SubsetTag::Unique, SubsetTag::Multiple] {
        let m = subset_metrics(mode, outcomes.iter().filter(|o| o.subset == tag));
        if m.n_total > 0 {
            per_subset.insert(tag.key().to_string(), m);
        }
    }
    let failures = outcomes
        .iter()
        .filter(|o| o.status != RecordStatus::Solved)
        .map(|o| Failure { index: o.index, scene_id: o.scene_id.clone(), query: o.query.clone(), status: o.status })
        .collect();
    MetricsReport {
        mode,
        n_total: all.n_total,
        n_solved: all.n_solved,
        acc_at_025: all.acc_at_025,
        acc_at_05: all.acc_at_05,
        selection_accuracy: all.selection_accuracy,
        per_subset,
        failures,
    }
}

fn program_file(dir: Option<&Path>, index: usize) -> Option<PathBuf> {
    dir.map(|d| d.join(format!("{index}.txt"))).filter(|p| p.is_file())
}

/// Ground truth box for a record, checking bbox and instance id agree.
fn resolve_gt(index: usize, rec: &QueryRecord, scene: &Scene, mode: EvalMode) -> Result<Option<Aabb>, HarnessError> {
    let from_instance = match &rec.gt_instance_id {
        Some(id) => Some(
            scene
                .instance(id)
                .ok_or_else(|| HarnessError::Data(format!("record {index}: gt_instance_id `{id}` not in scene `{}`", scene.id)))?
                .bbox,
        ),
        None if mode == EvalMode::Selection => {
            return Err(HarnessError::Data(format!("record {index}: selection mode needs gt_instance_id")))
        }
        None => None,
    };
    if let (Some(a), Some(b)) = (rec.gt_bbox, from_instance) {
        if iou_3d(&a, &b) < 1.0 - 1e-6 {
            return Err(HarnessError::Data(format!("record {index}: gt_bbox disagrees with gt_instance_id")));
        }
    }
    Ok(rec.gt_bbox.or(from_instance))
}

struct Prepared {
    scene: Arc<Scene>,
    gt_bbox: Option<Aabb>,
    subset: SubsetTag,
    subset_note: Option<String>,
}

fn evaluate_one(index: usize, rec: &QueryRecord, prep: &Prepared, cfg: &SolverConfig, opts: &EvalOptions) -> RecordOutcome {
    let mut diagnostics: Vec<String> = prep.subset_note.iter().cloned().collect();
    let program = match (&rec.program, program_file(opts.programs_dir, index), opts.llm) {
        (Some(p), _, _) => Ok(p.clone()),
        (None, Some(path), _) => std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display())),
        (None, None, Some(client)) => {
            client.generate_program(&rec.query, &default_labels(&prep.scene)).map_err(|e| e.to_string())
        }
        (None, None, None) => Err("no program source".to_string()),
    };

    let result = match program {
        Err(e) => {
            diagnostics.push(e);
            None
        }
        Ok(text) => match compile(&text, opts.strict) {
            Err(e) => {
                diagnostics.extend(e.diagnostics().iter().map(ToString::to_string));
                Some(GroundingResult::invalid_program(Vec::new()))
            }
            Ok(lowered) => {
                diagnostics.extend(lowered.diagnostics.iter().map(ToString::to_string));
                Some(ground(&lowered.csp, &prep.scene, cfg))
            }
        },
    };

    let status = result.as_ref().map_or(RecordStatus::LlmError, |r| r.status.into());
    let (predicted_instance, predicted_bbox) = match &result {
        Some(r) => {
            diagnostics.extend(r.diagnostics.iter().map(|d| format!("{}: {}", d.stage, d.message)));
            (r.target_instance.clone(), r.target_bbox)
        }
        None => (None, None),
    };
    let iou = match (predicted_bbox, prep.gt_bbox) {
        (Some(p), Some(g)) => Some(iou_3d(&p, &g)),
        _ => None,
    };
    let correct_selection = rec.gt_instance_id.is_some() && predicted_instance == rec.gt_instance_id;
    RecordOutcome {
        index,
        scene_id: rec.scene_id.clone(),
        query: rec.query.clone(),
        subset: prep.subset,
        status,
        predicted_instance,
        predicted_bbox,
        iou,
        correct_at_025: iou.is_some_and(|v| v > 0.25),
        correct_at_05: iou.is_some_and(|v| v > 0.5),
        correct_selection,
        diagnostics,
    }
}

/// Grounds every record and scores it.
///
/// Data problems (missing scenes, inconsistent ground truth, records without
/// any program source) abort before solving. Per-record grounding failures
/// are scored as incorrect and listed in the report. Records run on `jobs`
/// threads; outcomes keep record order.
pub fn evaluate(
    records: &[QueryRecord],
    scenes: &SceneStore,
    cfg: &SolverConfig,
    opts: &EvalOptions,
) -> Result<Evaluation, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::NoRecords);
    }
    cfg.validate().map_err(HarnessError::Data)?;

    let mut loaded: HashMap<&str, Arc<Scene>> = HashMap::new();
    let mut prepared = Vec::with_capacity(records.len());
    for (index, rec) in records.iter().enumerate() {
        if rec.program.is_none() && opts.llm.is_none() && program_file(opts.programs_dir, index).is_none() {
            return Err(HarnessError::NoProgramSource { index });
        }
        let scene = match loaded.get(rec.scene_id.as_str()) {
            Some(s) => s.clone(),
            None => {
                let s = scenes.load(&rec.scene_id)?;
                loaded.insert(&rec.scene_id, s.clone());
                s
            }
        };
        let gt_bbox = resolve_gt(index, rec, &scene, opts.mode)?;
        let (subset, subset_note) = match rec.subset_tag {
            Some(tag) => (tag, None),
            None => classify_query(&scene, &rec.gt_label),
        };
        prepared.push(Prepared { scene, gt_bbox, subset, subset_note });
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Io(format!("thread pool: {e}")))?;
    let outcomes: Vec<RecordOutcome> = pool.install(|| {
        records
            .par_iter()
            .zip(prepared.par_iter())
            .enumerate()
            .map(|(i, (rec, prep))| evaluate_one(i, rec, prep, cfg, opts))
            .collect()
    });
    Ok(Evaluation { report: report_from_outcomes(opts.mode, &outcomes), outcomes })
}
