//! Run configuration loaded from TOML. Every field has a default, so an
//! empty file (or no file) is valid.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use flowcoord::coordinator::geometry::GeometryConfig;
use flowcoord::coordinator::CoordinationParams;
use flowcoord::flow::SolveOptions;
use flowcoord::grid::GridConfig;
use flowcoord::pipeline::PipelineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for demand generation.
    pub seed: u64,
    /// Departure horizon (s).
    pub horizon_s: f64,
    pub feedback_rounds: usize,
    pub grid: GridConfig,
    pub solver: SolveOptions,
    pub coordination: CoordinationParams,
    pub geometry: GeometryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            seed: 7,
            horizon_s: p.horizon_s,
            feedback_rounds: p.feedback_rounds,
            grid: GridConfig::default(),
            solver: SolveOptions::default(),
            coordination: p.coordination,
            geometry: p.geometry,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            max_iters: self.solver.max_iters,
            gap_tol: self.solver.gap_tol,
            horizon_s: self.horizon_s,
            feedback_rounds: self.feedback_rounds,
            coordination: self.coordination,
            geometry: self.geometry.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
