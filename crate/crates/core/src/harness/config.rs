use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Thresholds;
use crate::llm_gateway::LlmConfig;
use crate::solver::{Engine, Heuristic, SolverConfig, DEFAULT_MAX_SOLUTIONS};

use super::HarnessError;

/// Defaults for every run, usually read from a JSON config file. Explicit
/// command-line flags override these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub thresholds: Thresholds,
    pub heuristic: Heuristic,
    pub engine: Engine,
    pub minmax: bool,
    pub max_solutions: usize,
    pub jobs: usize,
    /// Lower programs in strict mode during evaluation.
    pub strict: bool,
    pub llm: LlmConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        EngineConfig {
            thresholds: solver.thresholds,
            heuristic: solver.heuristic,
            engine: solver.engine,
            minmax: solver.minmax_enabled,
            max_solutions: DEFAULT_MAX_SOLUTIONS,
            jobs: 1,
            strict: false,
            llm: LlmConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let cfg: EngineConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::Data(format!("config {}: {e}", path.display())))?;
        cfg.solver_config().validate().map_err(HarnessError::Data)?;
        if cfg.jobs == 0 {
            return Err(HarnessError::Data("jobs must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            thresholds: self.thresholds,
            heuristic: self.heuristic,
            engine: self.engine,
            minmax_enabled: self.minmax,
            max_solutions: self.max_solutions,
        }
    }
}
